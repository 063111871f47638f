fn main() {
    std::process::exit(stereochain::cli::run(std::env::args_os()));
}
