fn main() { std::process::exit(splat_core::cli::run(std::env::args_os())); }
