fn main() {
    std::process::exit(mfg_cli::main_with_args(std::env::args_os()));
}
