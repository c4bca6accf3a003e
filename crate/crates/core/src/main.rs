fn main() {
    std::process::exit(stablekf::cli::main_with_args(std::env::args_os()));
}
