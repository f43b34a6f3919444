fn main() {
    std::process::exit(scalpview::cli::main());
}
