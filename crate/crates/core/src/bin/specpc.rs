fn main() {
    std::process::exit(specpc::cli::main_with_args(std::env::args_os()));
}
