fn main() {
    std::process::exit(sgdphaselab::cli::main_with_args(std::env::args_os()));
}
