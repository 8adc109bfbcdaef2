fn main() {
    std::process::exit(skelkin::cli::run(std::env::args_os()));
}
