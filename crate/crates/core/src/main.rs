fn main() {
    std::process::exit(spanlab::cli::main());
}
