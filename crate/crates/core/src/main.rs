fn main() {
    std::process::exit(pdae_eps::cli_io::cli::main_with_args(std::env::args_os()));
}
