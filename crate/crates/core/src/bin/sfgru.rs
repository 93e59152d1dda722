fn main() {
    std::process::exit(sfgru::cli::run(std::env::args_os()));
}
