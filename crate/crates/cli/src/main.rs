fn main() {
    std::process::exit(tsynth_cli::main_with_args(std::env::args_os()));
}
