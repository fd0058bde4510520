fn main() {
    std::process::exit(codenav::cli::main_with_args(std::env::args_os()));
}
