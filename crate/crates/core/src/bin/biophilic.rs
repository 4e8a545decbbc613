fn main() {
    std::process::exit(biophilic::cli::run(std::env::args_os()));
}
