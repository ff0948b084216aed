fn main() {
    std::process::exit(ss_sfr::cli::run(std::env::args_os()));
}
