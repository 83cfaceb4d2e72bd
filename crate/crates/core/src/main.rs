fn main() {
    std::process::exit(ringsum::cli::main_with(std::env::args_os()));
}
