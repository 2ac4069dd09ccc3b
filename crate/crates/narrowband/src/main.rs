fn main() {
    std::process::exit(narrowband::cli::main_with_args(std::env::args_os()));
}
