fn main() {
    std::process::exit(dancestream::cli::run(std::env::args_os()));
}
