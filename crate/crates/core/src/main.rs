fn main() {
    std::process::exit(iaa_core::cli::run(std::env::args_os()));
}
