fn main() {
    std::process::exit(lamblab::cli::main_with_args(std::env::args_os()));
}
