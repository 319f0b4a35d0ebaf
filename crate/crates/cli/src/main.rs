fn main() {
    std::process::exit(mdim_cli::main_with_args(std::env::args_os()));
}
