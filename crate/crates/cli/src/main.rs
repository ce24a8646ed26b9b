fn main() {
    std::process::exit(koopman_cli::run(std::env::args_os()));
}
