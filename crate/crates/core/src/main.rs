fn main() {
    std::process::exit(editqa::cli::run_from_args(std::env::args_os()));
}
