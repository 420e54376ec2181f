fn main() {
    std::process::exit(mmwave_ee::cli::main_with_args(std::env::args_os()));
}
