fn main() {
    std::process::exit(mixsem_cli::run(std::env::args_os()));
}
