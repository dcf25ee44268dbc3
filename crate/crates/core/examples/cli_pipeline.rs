// Drive the command-line interface in-process: synth, train, impute, eval.

use std::path::Path;

use metatsi::cli;

pub fn run() -> metatsi::Result<()> {
    let dir = tempfile::tempdir()?;
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/small.json");
    let out = dir.path().to_string_lossy().into_owned();
    let data = format!("{out}/synthetic.csv");
    let ckpt = format!("{out}/checkpoint.bin");
    let steps: [&[&str]; 4] = [
        &["synth"],
        &["train", "--data", &data, "--epochs", "3"],
        &["impute", "--data", &data, "--checkpoint", &ckpt],
        &["eval", "--data", &data, "--checkpoint", &ckpt, "--rates", "0.2"],
    ];
    for step in steps {
        let mut args = vec!["metatsi", "--config", config.to_str().unwrap(), "--out", &out, "--seed", "4"];
        args.extend_from_slice(step);
        let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
        let code = cli::run(args, &mut stdout, &mut stderr);
        print!("$ metatsi {}\n{}", step.join(" "), String::from_utf8_lossy(&stdout));
        if code != 0 {
            return Err(metatsi::Error::Config(String::from_utf8_lossy(&stderr).trim().to_string()));
        }
    }

    let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
    let code = cli::run(["metatsi", "train", "--data", "missing.csv"], &mut stdout, &mut stderr);
    print!("missing input -> exit {code}: {}", String::from_utf8_lossy(&stderr));

    let mut files: Vec<String> = std::fs::read_dir(dir.path())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    println!("outputs: {}", files.join(", "));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
