fn main() {
    std::process::exit(mga::cli::run_from(std::env::args_os()));
}
