fn main() {
    std::process::exit(heatqc::cli::main_with_args(std::env::args_os()));
}
