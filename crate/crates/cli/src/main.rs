fn main() {
    std::process::exit(rwre_cli::main_with(std::env::args_os()));
}
