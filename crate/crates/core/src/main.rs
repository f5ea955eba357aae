fn main() {
    std::process::exit(regimelab::cli::run());
}
