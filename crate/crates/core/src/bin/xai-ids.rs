fn main() {
    std::process::exit(xai_ids::cli::dispatch(std::env::args_os()));
}
