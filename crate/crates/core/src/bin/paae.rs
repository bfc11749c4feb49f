fn main() {
    std::process::exit(paae::cli::main_with_args(std::env::args_os()));
}
