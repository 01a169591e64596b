fn main() {
    std::process::exit(streamscale::cli::main_with(std::env::args_os()));
}
