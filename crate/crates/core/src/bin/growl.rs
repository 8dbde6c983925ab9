fn main() {
    std::process::exit(growl::cli::main());
}
