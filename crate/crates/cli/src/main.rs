fn main() {
    std::process::exit(recallfeed_cli::run(std::env::args_os()));
}
