fn main() {
    std::process::exit(ucts::cli::run(std::env::args().skip(1)));
}
