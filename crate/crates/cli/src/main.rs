fn main() {
    std::process::exit(vibronic_cli::run_from_args(std::env::args_os()));
}
