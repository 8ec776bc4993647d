fn main() {
    std::process::exit(sepdet_cli::main_with_args(std::env::args_os()));
}
