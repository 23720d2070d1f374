fn main() {
    std::process::exit(lqnet_cli::run(std::env::args_os()));
}
