fn main() {
    std::process::exit(cassi_cli::main_with_args(std::env::args_os()));
}
