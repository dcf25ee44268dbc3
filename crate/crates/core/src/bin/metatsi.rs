fn main() {
    let code = metatsi::cli::run(std::env::args_os(), std::io::stdout(), std::io::stderr());
    std::process::exit(code);
}
