fn main() {
    std::process::exit(scbicm::cli::main_with_args(std::env::args_os()));
}
