fn main() {
    let code = fairtab_cli::run(std::env::args());
    std::process::exit(code);
}
