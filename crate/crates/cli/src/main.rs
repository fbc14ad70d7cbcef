fn main() {
    std::process::exit(atl_cli::run(std::env::args_os()));
}
