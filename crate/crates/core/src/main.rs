fn main() {
    std::process::exit(qtk::cli::run(std::env::args_os()));
}
