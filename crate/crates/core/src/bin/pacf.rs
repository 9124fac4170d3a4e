fn main() {
    std::process::exit(pacf::cli::run_cli(std::env::args_os()));
}
