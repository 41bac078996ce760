fn main() {
    std::process::exit(infoplay_cli::run(std::env::args_os()));
}
