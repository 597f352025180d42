fn main() {
    std::process::exit(fedprotip::harness::run_cli(std::env::args_os()));
}
