//! Command-line driver. The binary only forwards its arguments to [`run`].

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, synth_generate, write_csv, SynthFamilyConfig, TimeSeriesInstance};
use crate::error::{Error, Result};
use crate::eval::{benchmark, export_latents, plot_series_svg, protocol_mask, run_protocol, EvalReport, Method, Protocol};
use crate::meta::{infer_adapt, load_checkpoint, pipeline_gradcheck, save_checkpoint, train, Checkpoint, TrainConfig};
use crate::tensor::BackwardFault;

#[derive(Debug, Parser)]
#[command(name = "metatsi", version, about = "Meta-learned implicit neural representations for time-series imputation")]
pub struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for synthesis, masking and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (1 gives the strictly sequential schedule).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic multi-city family to `synthetic.csv`.
    Synth {
        #[arg(long)]
        cities: Option<usize>,
        #[arg(long)]
        series: Option<usize>,
    },
    /// Meta-train and write `checkpoint.bin`, `best.bin` and `train_log.csv`.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Adapt to each series and write `imputed.csv`.
    Impute {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        model: ModelArg,
        /// Keep model outputs at observed positions instead of the inputs.
        #[arg(long)]
        no_overwrite: bool,
    },
    /// Score methods under the masking protocol; writes a CSV and JSON report.
    Eval {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        model: ModelArg,
        /// Comma-separated observation rates.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// Comma-separated methods: mean, linear, metatsi.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Train a model per seed, rate and split instead of loading one.
        #[arg(long)]
        train: bool,
        /// Number of series to plot as SVG.
        #[arg(long)]
        plots: Option<usize>,
    },
    /// Check tape gradients of the full loss against finite differences.
    Gradcheck {
        /// Flip the sign of the sine backward rule (negative control).
        #[arg(long)]
        corrupt_backward: bool,
    },
    /// Write adapted latent codes to `latents.csv`.
    ExportLatents {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        model: ModelArg,
        /// Observation rate the codes are adapted at.
        #[arg(long)]
        rate: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Input CSV (`series_id,city,timestamp,value[,mask]`).
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
}

/// Contents of the `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub synth: SynthFamilyConfig,
    pub train: TrainConfig,
    pub protocol: Protocol,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Observation rate for latent export.
    pub latent_rate: Option<f64>,
    /// Series to plot during `eval`.
    pub plots: usize,
    pub overwrite_observed: Option<bool>,
}

impl CliConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("config field `{path}`: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

fn resolve_data(flag: &Option<PathBuf>, config: &CliConfig) -> Result<Vec<TimeSeriesInstance>> {
    let path = flag
        .clone()
        .or_else(|| config.data.clone())
        .ok_or_else(|| Error::Config("no dataset given (use --data or the `data` config field)".into()))?;
    if !path.is_file() {
        return Err(Error::Config(format!("dataset `{}` does not exist", path.display())));
    }
    load_csv(&path)
}

fn resolve_checkpoint(flag: &Option<PathBuf>, config: &CliConfig) -> Result<Option<Checkpoint>> {
    match flag.clone().or_else(|| config.checkpoint.clone()) {
        None => Ok(None),
        Some(p) if !p.is_file() => Err(Error::Config(format!("checkpoint `{}` does not exist", p.display()))),
        Some(p) => load_checkpoint(&p).map(Some),
    }
}

fn require_checkpoint(flag: &Option<PathBuf>, config: &CliConfig) -> Result<Checkpoint> {
    resolve_checkpoint(flag, config)?
        .ok_or_else(|| Error::Config("no checkpoint given (use --checkpoint or the `checkpoint` config field)".into()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(e).context(dir.display()))
}

/// Run one parsed command, writing human-readable progress to `out`.
pub fn execute(cli: Cli, mut out: impl Write) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.synth.seed = seed;
        config.train.seed = seed;
        config.protocol.seeds = vec![seed];
    }
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));

    match cli.command {
        Command::Synth { cities, series } => {
            if let Some(c) = cities {
                config.synth.n_cities = c;
            }
            if let Some(s) = series {
                config.synth.series_per_city = s;
            }
            let data = synth_generate(&config.synth)?;
            create_dir(&dir)?;
            let path = dir.join("synthetic.csv");
            write_csv(&path, &data)?;
            writeln!(out, "wrote {} series to {}", data.len(), path.display())?;
        }
        Command::Train { data, epochs } => {
            if let Some(e) = epochs {
                config.train.epochs = e;
            }
            config.train.validate()?;
            let dataset = resolve_data(&data.data, &config)?;
            let outcome = train(&dataset, &config.train)?;
            create_dir(&dir)?;
            save_checkpoint(dir.join("checkpoint.bin"), &outcome.last)?;
            save_checkpoint(dir.join("best.bin"), &outcome.best)?;
            let mut log = String::from("epoch,train_loss,val_mae\n");
            for h in &outcome.history {
                let val = h.val_mae.map_or(String::new(), |v| v.to_string());
                log.push_str(&format!("{},{},{}\n", h.epoch, h.train_loss, val));
            }
            fs::write(dir.join("train_log.csv"), log)?;
            writeln!(out, "trained {} epochs on {} series; checkpoint in {}", outcome.history.len(), dataset.len(), dir.display())?;
        }
        Command::Impute {
            data,
            model,
            no_overwrite,
        } => {
            let dataset = resolve_data(&data.data, &config)?;
            let ckpt = require_checkpoint(&model.checkpoint, &config)?;
            let overwrite = !no_overwrite && config.overwrite_observed.unwrap_or(true);
            use rayon::prelude::*;
            let imputed = (dataset.par_iter())
                .map(|s| infer_adapt(s, &ckpt.params, &ckpt.config, overwrite).map(|(_, v)| v))
                .collect::<Result<Vec<_>>>()?;
            let mut csv = String::from("series_id,timestamp,value,imputed_flag\n");
            for (s, v) in dataset.iter().zip(&imputed) {
                for k in 0..s.len() {
                    csv.push_str(&format!("{},{},{},{}\n", s.id, s.timestamps[k], v[k], u8::from(!s.mask[k])));
                }
            }
            create_dir(&dir)?;
            fs::write(dir.join("imputed.csv"), csv)?;
            writeln!(out, "imputed {} series", dataset.len())?;
        }
        Command::Eval {
            data,
            model,
            rates,
            methods,
            train: train_here,
            plots,
        } => {
            if let Some(r) = rates {
                config.protocol.rates = r;
            }
            if let Some(m) = methods {
                config.protocol.methods = m.iter().map(|s| Method::parse(s.trim())).collect::<Result<_>>()?;
            }
            config.protocol.validate()?;
            let dataset = resolve_data(&data.data, &config)?;
            let ckpt = resolve_checkpoint(&model.checkpoint, &config)?;
            let report = if train_here {
                benchmark(&dataset, &config.protocol, &config.train)?
            } else {
                run_protocol(&dataset, &config.protocol, ckpt.as_ref())?
            };
            report.save(&dir)?;
            let n_plots = plots.unwrap_or(config.plots);
            if n_plots > 0 {
                write_plots(&dataset, &config.protocol, ckpt.as_ref(), n_plots, &dir.join("plots"))?;
            }
            print_overall(&report, &mut out)?;
        }
        Command::Gradcheck { corrupt_backward } => {
            let fault = corrupt_backward.then_some(BackwardFault::SinSignFlip);
            let report = pipeline_gradcheck(fault)?;
            writeln!(out, "group,entries,max_abs,max_rel")?;
            for p in &report.params {
                writeln!(out, "{},{},{:.3e},{:.3e}", p.name, p.entries, p.max_abs, p.max_rel)?;
            }
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            writeln!(out, "{verdict} max_rel={:.3e} tolerance={:.0e}", report.max_rel(), report.tolerance)?;
            if !report.passed() {
                return Err(Error::numeric(format!(
                    "gradient check failed: max relative error {:.3e} exceeds {:.0e}",
                    report.max_rel(),
                    report.tolerance
                )));
            }
        }
        Command::ExportLatents { data, model, rate } => {
            let dataset = resolve_data(&data.data, &config)?;
            let ckpt = require_checkpoint(&model.checkpoint, &config)?;
            let rate = rate.or(config.latent_rate).unwrap_or(1.0);
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(Error::Config(format!("latent rate must be in (0, 1], got {rate}")));
            }
            create_dir(&dir)?;
            let seed = config.protocol.seeds[0];
            let latents = export_latents(&dataset, &ckpt, rate, seed, dir.join("latents.csv"))?;
            writeln!(out, "wrote {} latent codes", latents.len())?;
        }
    }
    Ok(())
}

fn write_plots(dataset: &[TimeSeriesInstance], protocol: &Protocol, ckpt: Option<&Checkpoint>, n: usize, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let (rate, seed) = (protocol.rates[0], protocol.seeds[0]);
    for truth in dataset.iter().take(n) {
        let masked = protocol_mask(truth, rate, seed)?;
        let mut preds = Vec::new();
        for &m in &protocol.methods {
            let p = match m {
                Method::Mean => crate::eval::baseline_mean(&masked)?,
                Method::Linear => crate::eval::baseline_linear_interp(&masked)?,
                Method::Metatsi => match ckpt {
                    Some(c) => infer_adapt(&masked, &c.params, &c.config, false)?.1,
                    None => continue,
                },
            };
            preds.push((m.name().to_string(), p));
        }
        let name: String = truth.id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        plot_series_svg(truth, &masked.mask, &preds, dir.join(format!("{name}.svg")))?;
    }
    Ok(())
}

fn print_overall(report: &EvalReport, out: &mut impl Write) -> Result<()> {
    writeln!(out, "method,rate,mae,mse")?;
    for a in report.summary().overall {
        writeln!(out, "{},{},{:.4},{:.4}", a.method.name(), a.rate, a.mae, a.mse)?;
    }
    Ok(())
}

/// Parse `args`, configure threads and logging, run, and map the outcome to
/// an exit code. Failures print one line `error[<kind>]: <message>` to
/// `err`.
pub fn run<I, T>(args: I, mut out: impl Write, mut err: impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            let _ = writeln!(err, "error[usage]: {first}");
            return 2;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            let _ = writeln!(err, "error[config]: --threads must be positive");
            return 2;
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.detail().replace('\n', " ");
            let _ = writeln!(err, "error[{}]: {msg}", e.kind());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_name_the_field() {
        let e = CliConfig::from_json(r#"{"train": {"epochs": "many"}}"#).unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("train.epochs")), "{e}");
        let e = CliConfig::from_json(r#"{"protocol": {"ratez": [0.1]}}"#).unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("ratez")), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(CliConfig::from_json("{}").unwrap(), CliConfig::default());
    }

    #[test]
    fn usage_errors_exit_two_with_one_line() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(["metatsi", "frobnicate"], &mut out, &mut err);
        assert_eq!(code, 2);
        let text = String::from_utf8(err).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("error[usage]: "));
    }

    #[test]
    fn missing_dataset_exits_two() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(["metatsi", "train", "--data", "/nonexistent/x.csv"], &mut out, &mut err);
        assert_eq!(code, 2);
        assert!(String::from_utf8(err).unwrap().starts_with("error[config]: "));
    }
}
