fn main() {
    std::process::exit(kmeq::cli::run(std::env::args_os()));
}
