fn main() {
    std::process::exit(safety_areas::cli::cli_main(std::env::args_os()));
}
