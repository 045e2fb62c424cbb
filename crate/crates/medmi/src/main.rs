fn main() {
    std::process::exit(medmi::cli::run(std::env::args_os()));
}
