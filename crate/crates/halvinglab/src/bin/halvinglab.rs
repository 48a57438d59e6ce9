fn main() {
    std::process::exit(halvinglab::cli::main_with(std::env::args_os()));
}
