fn main() {
    std::process::exit(intent_explain::cli::run(std::env::args_os()));
}
