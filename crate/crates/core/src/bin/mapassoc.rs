fn main() {
    std::process::exit(mapassoc::cli::main_with_args(std::env::args_os()));
}
