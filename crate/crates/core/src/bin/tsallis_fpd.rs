fn main() {
    std::process::exit(tsallis_fpd::cli::run(std::env::args_os()));
}
