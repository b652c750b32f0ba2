fn main() {
    std::process::exit(chaoscope_cli::main_with_args(std::env::args_os()));
}
