fn main() {
    std::process::exit(fairprog::harness::cli(std::env::args().collect()));
}
