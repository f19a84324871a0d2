fn main() {
    std::process::exit(safemon::cli::run(std::env::args_os()));
}
