fn main() {
    std::process::exit(ddspec_cli::run_cli(std::env::args_os()));
}
