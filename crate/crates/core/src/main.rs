fn main() {
    std::process::exit(lyapulse::cli_main());
}
