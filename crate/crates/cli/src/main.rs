fn main() {
    std::process::exit(logpolar_cli::main_with(std::env::args_os()));
}
