fn main() {
    std::process::exit(viral_rd::cli::main_with_args(std::env::args_os()));
}
