fn main() {
    std::process::exit(stopover::cli::run());
}
