fn main() {
    std::process::exit(thermopatch::cli::run());
}
