// Record a small computation on the tape, backpropagate, and compare the
// result against central differences. Then run the full pipeline check.

use metatsi::meta::pipeline_gradcheck;
use metatsi::tensor::{finite_diff_check, BackwardFault, Tape, Tensor};

pub fn run() -> metatsi::Result<()> {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![1, 3], vec![0.3, -1.2, 0.8])?);
    let w = tape.param(Tensor::new(vec![3, 2], vec![0.5, -0.1, 0.2, 0.7, -0.4, 0.9])?);
    let h = tape.matmul(x, w)?;
    let s = tape.sin(h);
    let sq = tape.square(s);
    let loss = tape.sum(sq, None)?;
    let grads = tape.backward(loss)?;
    println!("loss = {:.6}", tape.value(loss).item());
    println!("d loss / d x = {:?}", grads.get(x).map(|g| g.data().to_vec()));

    let params = vec![
        ("x".to_string(), tape.value(x).clone()),
        ("w".to_string(), tape.value(w).clone()),
    ];
    let report = finite_diff_check(
        |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let s = t.sin(h);
            let sq = t.square(s);
            t.sum(sq, None)
        },
        &params,
        1e-6,
        1e-6,
    )?;
    println!("small graph: max relative error {:.2e}", report.max_rel());

    let full = pipeline_gradcheck(None)?;
    for p in &full.params {
        println!("  {:<28} {:>4} entries  max_rel {:.2e}", p.name, p.entries, p.max_rel);
    }
    println!("pipeline: {}", if full.passed() { "PASS" } else { "FAIL" });

    let broken = pipeline_gradcheck(Some(BackwardFault::SinSignFlip))?;
    println!("with a corrupted sin backward: max_rel {:.2e} ({})", broken.max_rel(), if broken.passed() { "PASS" } else { "FAIL" });
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
