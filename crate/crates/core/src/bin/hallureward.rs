fn main() {
    std::process::exit(hallureward::cli::main_with_args(std::env::args_os()));
}
