fn main() {
    std::process::exit(netdep_cli::main_with(std::env::args_os()));
}
