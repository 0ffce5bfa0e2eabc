fn main() {
    std::process::exit(viewsel::cli::main_with_args(std::env::args_os()));
}
