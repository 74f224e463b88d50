fn main() {
    std::process::exit(idioprobe::cli::main_with_args(std::env::args_os()));
}
