fn main() {
    std::process::exit(clverify::cli::main_with_args(std::env::args_os()));
}
