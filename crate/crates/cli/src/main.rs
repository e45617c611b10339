fn main() {
    std::process::exit(critlab_cli::run(std::env::args_os()));
}
