//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use metatsi::cli::{self, CliConfig};
use metatsi::data::{
    apply_masking, denormalize, hidden_positions, masked_instance_normalize, synth_generate, znorm_metrics, MaskSpec, SynthFamilyConfig, TimeSeriesInstance,
    DEFAULT_EPSILON,
};
use metatsi::embedding::{delay_embed, duplication_matrix, inverse_embed, DelayConfig};
use metatsi::eval::{baseline_mean, protocol_mask, run_protocol, Method, Protocol};
use metatsi::meta::{impute, impute_task, infer_adapt, inner_adapt, latent_interpolate, pipeline_gradcheck, train, Checkpoint, Task, TrainConfig};
use metatsi::model::{factorized_forward, latent_lipschitz_bound, lipschitz_bound, CrfConfig, ModelParams};
use metatsi::seeding;

const RATE: f64 = 0.1;
const SEEDS: [u64; 3] = [0, 1, 2];

fn benchmark_config() -> CliConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic_benchmark.json");
    CliConfig::load(&path).expect("benchmark config")
}

struct Gate {
    failures: usize,
}

impl Gate {
    fn report(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        let line = format!("[{}] C{id:02} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
        let mut out = std::io::stdout();
        let _ = out.write_all(line.as_bytes());
        let _ = out.flush();
    }
}

/// Model trained on the masked default family for one seed, with its
/// evaluation.
struct Trained {
    seed: u64,
    dataset: Vec<TimeSeriesInstance>,
    checkpoint: Checkpoint,
    model_mae: f64,
    mean_mae: f64,
    linear_mae: f64,
    seconds: f64,
}

fn masked_family(dataset: &[TimeSeriesInstance], seed: u64) -> Vec<TimeSeriesInstance> {
    dataset.iter().map(|s| protocol_mask(s, RATE, seed).unwrap()).collect()
}

fn protocol(seed: u64, methods: Vec<Method>) -> Protocol {
    Protocol {
        rates: vec![RATE],
        seeds: vec![seed],
        methods,
        ..Default::default()
    }
}

fn train_and_score(dataset: &[TimeSeriesInstance], config: &TrainConfig, seed: u64) -> metatsi::Result<(Checkpoint, f64, f64, f64)> {
    let run = TrainConfig { seed, ..config.clone() };
    let outcome = train(&masked_family(dataset, seed), &run)?;
    let report = run_protocol(dataset, &protocol(seed, vec![Method::Mean, Method::Linear, Method::Metatsi]), Some(&outcome.last))?;
    let m = |method| report.mean_mae(method, RATE, Some(seed)).unwrap();
    Ok((outcome.last, m(Method::Metatsi), m(Method::Mean), m(Method::Linear)))
}

fn dense_pinv_apply(cfg: &DelayConfig, t: usize, y: &[f64]) -> Vec<f64> {
    // least squares through the normal equations, solved by elimination
    let d = duplication_matrix(cfg, t).unwrap().to_dense();
    let mut a = vec![vec![0.0; t + 1]; t];
    for (row, &yr) in d.iter().zip(y) {
        for i in 0..t {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..t {
                a[i][j] += row[i] * row[j];
            }
            a[i][t] += row[i] * yr;
        }
    }
    for col in 0..t {
        let p = (col..t).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, p);
        for r in 0..t {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=t {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..t).map(|i| a[i][t] / a[i][i]).collect()
}

fn c1_gradients(gate: &mut Gate) {
    let started = Instant::now();
    let report = pipeline_gradcheck(None).unwrap();
    let secs = started.elapsed().as_secs_f64();
    gate.report(
        1,
        "gradient oracle",
        report.max_rel() <= 1e-4 && report.params.len() >= 2 && secs < 30.0,
        format!(
            "max_rel={:.2e} max_abs={:.2e} over {} groups (tol 1e-4), {secs:.2}s (limit 30s)",
            report.max_rel(),
            report.max_abs(),
            report.params.len()
        ),
    );
}

fn c2_embedding(gate: &mut Gate) {
    let mut rng = seeding::rng(2, "acceptance-embedding", &[]);
    let (mut worst_round, mut worst_pinv, mut checked, mut skipped) = (0.0f64, 0.0f64, 0, 0);
    for m in 1..=5 {
        for delta in 1..=3 {
            for t in 6..=50 {
                let cfg = DelayConfig { m, delta };
                if cfg.rows(t).is_err() {
                    skipped += 1;
                    continue;
                }
                if t <= 30 {
                    let x: Vec<f64> = (0..t).map(|_| rng.random_range(-5.0..5.0)).collect();
                    let back = inverse_embed(delay_embed(&x, &cfg).unwrap().data(), &cfg, t).unwrap();
                    for (a, b) in x.iter().zip(&back) {
                        worst_round = worst_round.max((a - b).abs());
                    }
                }
                let cells = cfg.rows(t).unwrap() * m;
                let y: Vec<f64> = (0..cells).map(|_| rng.random_range(-5.0..5.0)).collect();
                let ours = inverse_embed(&y, &cfg, t).unwrap();
                for (a, b) in ours.iter().zip(dense_pinv_apply(&cfg, t, &y)) {
                    worst_pinv = worst_pinv.max((a - b).abs());
                }
                checked += 1;
            }
        }
    }
    gate.report(
        2,
        "embedding oracle",
        worst_round <= 1e-12 && worst_pinv <= 1e-10,
        format!(
            "round-trip err {worst_round:.1e} (tol 1e-12), pseudo-inverse err {worst_pinv:.1e} (tol 1e-10), {checked} configs, {skipped} below minimum length"
        ),
    )
}

fn c3_normalization(gate: &mut Gate) {
    let (mut worst, mut worst_mean, mut n) = (0.0f64, 0.0f64, 0);
    for seed in SEEDS {
        let family = synth_generate(&SynthFamilyConfig { seed, ..Default::default() }).unwrap();
        for s in &family {
            for rate in [1.0, 0.2, 0.1, 0.05, 0.01] {
                let masked = apply_masking(s, &MaskSpec::for_series(rate, seed, &s.id)).unwrap();
                let (normed, stats) = masked_instance_normalize(&masked, DEFAULT_EPSILON).unwrap();
                for (x, back) in masked.values.iter().zip(denormalize(&normed.values, &stats)) {
                    worst = worst.max((x - back).abs());
                }
                let observed: Vec<f64> = (0..masked.len()).filter(|&k| masked.mask[k]).map(|k| normed.values[k]).collect();
                let (sum, count) = (observed.iter().sum::<f64>(), observed.len() as f64);
                worst_mean = worst_mean.max((sum / count).abs());
                n += 1;
            }
        }
    }
    gate.report(
        3,
        "normalization round trip",
        worst <= 1e-12 && worst_mean <= 1e-10,
        format!("max |x - denorm(norm(x))| = {worst:.1e} (tol 1e-12), max |masked mean| = {worst_mean:.1e} (tol 1e-10), {n} masked series"),
    );
}

fn c4_crf(gate: &mut Gate) {
    let m = TrainConfig::default().model;
    let crf = CrfConfig::new(&m.scales, m.features_per_scale, &m.layer_scales[..m.layers], m.hidden, 4).unwrap();
    let sine = crf.as_sine_layer();
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let c = -1.0 + 2.0 * k as f64 / 999.0;
        for (a, b) in metatsi::model::crf_features(c, &crf).iter().zip(sine.eval(c)) {
            worst = worst.max((a - b).abs());
        }
    }
    gate.report(4, "CRF / sine-layer identity", worst <= 1e-12, format!("max err {worst:.1e} over 1000 coordinates (tol 1e-12)"));
}

fn c5_lipschitz(gate: &mut Gate, t: &Trained) {
    let params = &t.checkpoint.params;
    let masked = protocol_mask(&t.dataset[0], RATE, t.seed).unwrap();
    let (phi, _) = infer_adapt(&masked, params, &t.checkpoint.config, true).unwrap();
    let bound = lipschitz_bound(params, &phi).unwrap();
    let mut rng = seeding::rng(5, "acceptance-lipschitz", &[]);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let a = (rng.random::<f64>(), rng.random::<f64>());
        let scale = if k % 2 == 0 { 1.0 } else { 1e-3 };
        let b = (
            (a.0 + scale * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0),
            (a.1 + scale * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0),
        );
        let dist = (a.0 - b.0).abs().max((a.1 - b.1).abs());
        if dist == 0.0 {
            continue;
        }
        let fa = factorized_forward(a.0, a.1, &phi, params).unwrap();
        let fb = factorized_forward(b.0, b.1, &phi, params).unwrap();
        worst = worst.max((fa - fb).abs() / dist);
    }
    gate.report(
        5,
        "empirical Lipschitz containment",
        worst <= bound,
        format!("max quotient {worst:.3e} <= bound {bound:.3e} over 1000 pairs (trained, seed {})", t.seed),
    );
}

fn c6_baselines(gate: &mut Gate, runs: &[Trained]) {
    let total: f64 = runs.iter().map(|r| r.seconds).sum();
    let pass = runs.iter().all(|r| r.model_mae < r.mean_mae && r.model_mae < r.linear_mae) && total < 600.0;
    let detail = runs
        .iter()
        .map(|r| format!("seed {}: model {:.4} / mean {:.4} / linear {:.4}", r.seed, r.model_mae, r.mean_mae, r.linear_mae))
        .collect::<Vec<_>>()
        .join("; ");
    gate.report(6, "learning beats baselines", pass, format!("{detail}; train+eval {total:.0}s (limit 600s)"));
}

fn c7_few_shot(gate: &mut Gate, runs: &[Trained]) {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let big = synth_generate(&SynthFamilyConfig {
            series_per_city: 16,
            seed: r.seed,
            ..Default::default()
        })
        .unwrap();
        let seen: Vec<&TimeSeriesInstance> = big.iter().filter(|s| r.dataset.iter().any(|d| d.id == s.id)).collect();
        assert!(seen.len() == r.dataset.len() && seen.iter().zip(&r.dataset).all(|(a, b)| *a == b));
        let mut held: Vec<&TimeSeriesInstance> = big.iter().filter(|s| !r.dataset.iter().any(|d| d.id == s.id)).collect();
        held.sort_by_key(|s| (s.id[s.id.find('s').unwrap()..].to_string(), s.city.clone()));
        held.truncate(8);
        let cfg = TrainConfig {
            inner_steps: 5,
            ..r.checkpoint.config.clone()
        };
        let params = &r.checkpoint.params;
        let (mut adapted, mut zero, mut mean) = (0.0, 0.0, 0.0);
        for s in &held {
            let masked = protocol_mask(s, RATE, r.seed).unwrap();
            let hidden = hidden_positions(s, &masked);
            let (_, pred) = infer_adapt(&masked, params, &cfg, true).unwrap();
            let base = impute(&masked, &params.zero_latent(), params, &cfg, true).unwrap();
            adapted += znorm_metrics(&pred, &s.values, &hidden).unwrap().mae / 8.0;
            zero += znorm_metrics(&base, &s.values, &hidden).unwrap().mae / 8.0;
            mean += znorm_metrics(&baseline_mean(&masked).unwrap(), &s.values, &hidden).unwrap().mae / 8.0;
        }
        pass &= held.len() == 8 && adapted < zero && adapted < mean;
        parts.push(format!("seed {}: adapted {adapted:.4} / phi=0 {zero:.4} / mean {mean:.4}", r.seed));
    }
    gate.report(7, "few-shot generalization (8 unseen series, K=5)", pass, parts.join("; "));
}

fn c8_ablations(gate: &mut Gate, full: &Trained, config: &TrainConfig) {
    let mut parts = vec![format!("full {:.4}", full.model_mae)];
    let mut pass = true;
    for (name, cfg) in [
        ("no normalization", TrainConfig { normalize: false, ..config.clone() }),
        ("no delay embedding (m=1)", TrainConfig { delay_m: Some(1), ..config.clone() }),
    ] {
        match train_and_score(&full.dataset, &cfg, full.seed) {
            Ok((_, mae, _, _)) => {
                pass &= mae > full.model_mae;
                parts.push(format!("{name} {mae:.4}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name} failed: {e}"));
            }
        }
    }
    gate.report(8, "ablation direction", pass, format!("{} (seed {}, rate {RATE})", parts.join(", "), full.seed));
}

fn c9_determinism(gate: &mut Gate) {
    let dir = tempfile::tempdir().unwrap();
    let mut config = benchmark_config();
    config.train.epochs = 2;
    config.synth.series_per_city = 3;
    let cfg_path = dir.path().join("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let run = |args: &[&str]| {
        let mut full = vec!["metatsi", "--threads", "1", "--config", cfg_path.to_str().unwrap()];
        full.extend_from_slice(args);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli::run(full, &mut out, &mut err);
        assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
    };
    let data_dir = dir.path().join("data");
    run(&["--out", data_dir.to_str().unwrap(), "synth"]);
    let data = data_dir.join("synthetic.csv");
    let data = data.to_str().unwrap();
    for k in ["a", "b"] {
        let out = dir.path().join(k);
        let out = out.to_str().unwrap();
        let ckpt = format!("{out}/checkpoint.bin");
        run(&["--out", out, "train", "--data", data]);
        run(&["--out", out, "eval", "--data", data, "--checkpoint", &ckpt]);
        run(&["--out", out, "export-latents", "--data", data, "--checkpoint", &ckpt]);
    }
    let files = ["checkpoint.bin", "best.bin", "train_log.csv", "report.csv", "summary.json", "latents.csv"];
    let same: Vec<bool> = files
        .iter()
        .map(|f| fs::read(dir.path().join("a").join(f)).unwrap() == fs::read(dir.path().join("b").join(f)).unwrap())
        .collect();
    let pass = same.iter().all(|&s| s);
    let diff: Vec<&str> = files.iter().zip(&same).filter(|(_, &s)| !s).map(|(f, _)| *f).collect();
    gate.report(
        9,
        "determinism (--threads 1)",
        pass,
        if pass {
            format!("{} artifacts byte-identical across two runs", files.len())
        } else {
            format!("differs: {}", diff.join(", "))
        },
    );
}

fn c10_interpolation(gate: &mut Gate, t: &Trained) {
    let params: &ModelParams = &t.checkpoint.params;
    let cfg = &t.checkpoint.config;
    let opts = cfg.task_options();
    let a = protocol_mask(&t.dataset[0], RATE, t.seed).unwrap();
    let b = protocol_mask(&t.dataset[t.dataset.len() - 1], RATE, t.seed).unwrap();
    let task = Task::from_series(&a, &params.crf, &opts).unwrap();
    let phi1 = inner_adapt(&task, params, cfg).unwrap();
    let phi2 = inner_adapt(&Task::from_series(&b, &params.crf, &opts).unwrap(), params, cfg).unwrap();
    let ends = latent_interpolate(&phi1, &phi2, 1.0, &task, params).unwrap() == impute_task(&task, &phi1, params, false).unwrap()
        && latent_interpolate(&phi1, &phi2, 0.0, &task, params).unwrap() == impute_task(&task, &phi2, params, false).unwrap();
    let dphi = phi1.values.iter().zip(&phi2.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let bound = latent_lipschitz_bound(params, &phi1, &phi2).unwrap() * task.norms[0].scale() * 0.05 * dphi;
    let grid: Vec<Vec<f64>> = (0..=20)
        .map(|k| latent_interpolate(&phi1, &phi2, k as f64 / 20.0, &task, params).unwrap().remove(0))
        .collect();
    let jump = grid
        .windows(2)
        .flat_map(|w| w[0].iter().zip(&w[1]).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    gate.report(
        10,
        "latent interpolation",
        ends && jump <= bound && jump.is_finite(),
        format!("endpoints exact: {ends}; max jump {jump:.3e} <= bound {bound:.3e} over mu step 0.05"),
    );
}

fn main() {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    let mut gate = Gate { failures: 0 };
    c1_gradients(&mut gate);
    c2_embedding(&mut gate);
    c3_normalization(&mut gate);
    c4_crf(&mut gate);

    let config = benchmark_config().train;
    let runs: Vec<Trained> = SEEDS
        .iter()
        .map(|&seed| {
            let started = Instant::now();
            let dataset = synth_generate(&SynthFamilyConfig { seed, ..Default::default() }).unwrap();
            let (checkpoint, model_mae, mean_mae, linear_mae) = train_and_score(&dataset, &config, seed).unwrap();
            Trained {
                seed,
                dataset,
                checkpoint,
                model_mae,
                mean_mae,
                linear_mae,
                seconds: started.elapsed().as_secs_f64(),
            }
        })
        .collect();

    c5_lipschitz(&mut gate, &runs[0]);
    c6_baselines(&mut gate, &runs);
    c7_few_shot(&mut gate, &runs);
    c8_ablations(&mut gate, &runs[0], &config);
    c9_determinism(&mut gate);
    c10_interpolation(&mut gate, &runs[0]);

    let verdict = format!("acceptance: {} of 10 criteria passed\n", 10 - gate.failures);
    let _ = std::io::stdout().write_all(verdict.as_bytes());
    if gate.failures > 0 {
        std::process::exit(1);
    }
}
