fn main() {
    std::process::exit(debias_cli::run(std::env::args_os()));
}
