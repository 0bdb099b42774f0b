fn main() {
    std::process::exit(rollwave_cli::run(std::env::args_os()));
}
