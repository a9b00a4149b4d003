fn main() {
    std::process::exit(reparam_denoise::cli::main_with_args(std::env::args_os()));
}
