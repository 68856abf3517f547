fn main() {
    std::process::exit(desklm::cli::main_with_args(std::env::args_os()));
}
