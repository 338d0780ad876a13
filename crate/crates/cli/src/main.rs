fn main() {
    std::process::exit(p6d_cli::run(std::env::args_os()));
}
