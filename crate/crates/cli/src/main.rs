fn main() {
    std::process::exit(nldiss_cli::run(std::env::args_os()));
}
