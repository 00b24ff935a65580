fn main() {
    std::process::exit(dccf_server::cli::run(std::env::args_os()));
}
