fn main() {
    std::process::exit(hlrank::cli::run(std::env::args_os()));
}
