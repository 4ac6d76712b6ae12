fn main() {
    std::process::exit(aklt::cli::run(std::env::args_os()));
}
