fn main() {
    std::process::exit(nigdcs::cli::run(std::env::args_os()));
}
