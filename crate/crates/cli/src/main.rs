fn main() {
    std::process::exit(artembed_cli::run(std::env::args_os()));
}
