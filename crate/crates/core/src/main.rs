fn main() {
    std::process::exit(ms_hybrid::cli::main_with_args(std::env::args_os()));
}
