fn main() {
    std::process::exit(wellposed::cli::run(std::env::args_os()));
}
