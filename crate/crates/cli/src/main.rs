fn main() {
    std::process::exit(aerocourier_cli::run(std::env::args_os()));
}
