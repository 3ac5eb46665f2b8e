fn main() {
    std::process::exit(gramian::cli::run(std::env::args_os()));
}
