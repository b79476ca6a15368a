fn main() {
    std::process::exit(ozadp::cli::run(std::env::args_os()));
}
