fn main() {
    std::process::exit(hscg_cli::main_with_args(std::env::args_os()));
}
