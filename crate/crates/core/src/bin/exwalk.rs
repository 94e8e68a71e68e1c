fn main() {
    std::process::exit(exwalk::cli::parse_and_dispatch(std::env::args_os()));
}
