fn main() {
    std::process::exit(cauchy_rician::io_cli::run_cli(std::env::args_os()));
}
