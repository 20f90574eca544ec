fn main() {
    std::process::exit(tracekit::cli::run_from_env());
}
