fn main() {
    std::process::exit(qnet::cli::run_from_args(std::env::args_os()));
}
