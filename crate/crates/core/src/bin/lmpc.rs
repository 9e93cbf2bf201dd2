fn main() {
    std::process::exit(lifted_lmpc::cli::main_with_args(std::env::args_os()));
}
