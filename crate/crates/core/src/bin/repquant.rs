fn main() {
    std::process::exit(repquant::cli::run(std::env::args_os()));
}
