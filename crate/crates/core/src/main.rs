fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut stdout = std::io::stdout().lock();
    let code = peersign::cli::run_with_args(std::env::args_os(), &mut stdout);
    std::process::exit(code);
}
