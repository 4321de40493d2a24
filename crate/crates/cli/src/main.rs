fn main() {
    std::process::exit(ambidec::run(std::env::args_os()));
}
