fn main() {
    std::process::exit(reflsm::cli::main_with_args(std::env::args_os()));
}
