fn main() {
    std::process::exit(carto_cli::run(std::env::args_os()));
}
