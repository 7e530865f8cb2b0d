fn main() {
    std::process::exit(fracspec::cli::run_cli(std::env::args_os()));
}
