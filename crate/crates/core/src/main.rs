fn main() {
    std::process::exit(hardmeta::cli::run(std::env::args_os()));
}
