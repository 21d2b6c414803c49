fn main() {
    std::process::exit(tgbranch::cli::run_cli(std::env::args_os()));
}
