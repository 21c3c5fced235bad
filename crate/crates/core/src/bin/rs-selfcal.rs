fn main() {
    std::process::exit(rs_selfcal::cli::run(std::env::args_os()));
}
