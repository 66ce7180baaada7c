fn main() {
    std::process::exit(lexint::cli::run_cli(std::env::args_os()));
}
