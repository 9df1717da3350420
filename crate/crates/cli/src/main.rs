fn main() {
    std::process::exit(lidforge_cli::run(std::env::args_os()));
}
