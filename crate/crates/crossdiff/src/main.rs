fn main() {
    std::process::exit(crossdiff::cli::main_entry(std::env::args_os()));
}
