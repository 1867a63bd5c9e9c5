fn main() {
    std::process::exit(featdistill_cli::dispatch(std::env::args_os()));
}
