fn main() {
    std::process::exit(spose::cli::main_with_args(std::env::args_os()));
}
