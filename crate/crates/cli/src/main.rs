fn main() {
    std::process::exit(trajfuse_cli::run(std::env::args_os()));
}
