fn main() {
    std::process::exit(pcfocus::cli::run(std::env::args_os()));
}
