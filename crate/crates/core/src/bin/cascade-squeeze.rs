fn main() {
    std::process::exit(cascade_squeeze::cli::main_with_args(std::env::args_os()));
}
