fn main() {
    std::process::exit(bdarma::cli::run(std::env::args_os()));
}
