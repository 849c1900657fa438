fn main() {
    std::process::exit(realism::cli::run(std::env::args_os()));
}
