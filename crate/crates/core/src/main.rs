fn main() {
    std::process::exit(pd_lab::cli::main_with_args(std::env::args_os()));
}
