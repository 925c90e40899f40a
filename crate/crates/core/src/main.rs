fn main() {
    std::process::exit(censorlab::cli::run(std::env::args_os()));
}
