fn main() {
    std::process::exit(tattooed::cli::run(std::env::args_os()));
}
