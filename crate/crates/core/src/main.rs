fn main() {
    std::process::exit(msfbm::cli::main_with_args(std::env::args_os()));
}
