fn main() {
    std::process::exit(mesa_core::cli::dispatch(std::env::args_os()));
}
