fn main() {
    std::process::exit(tactile_servo::cli::run_cli(std::env::args_os()));
}
