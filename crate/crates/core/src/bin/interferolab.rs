fn main() {
    std::process::exit(interferolab::cli::cli_main(std::env::args_os()));
}
