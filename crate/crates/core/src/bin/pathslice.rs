fn main() {
    std::process::exit(pathslice::cli::main_with_args(std::env::args_os()));
}
