fn main() {
    std::process::exit(toposkms::cli::main_with_args(std::env::args_os()));
}
