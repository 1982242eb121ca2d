fn main() {
    std::process::exit(probft_cli::app::run(std::env::args_os()));
}
