fn main() {
    std::process::exit(qprox::harness::cli::run(std::env::args_os()));
}
