fn main() {
    std::process::exit(mixsvs::cli::run(std::env::args_os()));
}
