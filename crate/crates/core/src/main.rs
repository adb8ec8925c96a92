fn main() {
    std::process::exit(nvspin::cli::run(std::env::args_os()));
}
