fn main() {
    std::process::exit(sarwave::cli::run(std::env::args_os()));
}
