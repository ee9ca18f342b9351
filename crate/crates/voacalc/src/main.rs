fn main() {
    std::process::exit(voacalc::cli::run(std::env::args_os()));
}
