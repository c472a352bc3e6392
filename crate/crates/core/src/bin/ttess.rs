fn main() {
    std::process::exit(ttess::cli::main_with_args(std::env::args_os()));
}
