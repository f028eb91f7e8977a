fn main() {
    std::process::exit(tensortom::cli::run());
}
