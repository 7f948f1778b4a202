fn main() {
    std::process::exit(thinflow::cli::main_with_args(std::env::args_os()));
}
