fn main() {
    std::process::exit(kardiex_cli::main_from_args(std::env::args_os()));
}
