fn main() {
    std::process::exit(stepseg::harness::cli::main());
}
