fn main() {
    let stdout = std::io::stdout();
    let code = ajd::cli::run_from_args(std::env::args_os(), &mut stdout.lock(), &mut std::io::stderr());
    std::process::exit(code);
}
