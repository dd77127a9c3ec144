fn main() {
    std::process::exit(egnns::cli::main());
}
