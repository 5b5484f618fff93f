fn main() {
    std::process::exit(quenchlab::cli::run(std::env::args_os()));
}
