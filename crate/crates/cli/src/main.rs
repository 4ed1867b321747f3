fn main() {
    std::process::exit(tscluster_cli::run_cli(std::env::args_os()));
}
