fn main() {
    std::process::exit(xpi_core::cli::run_command(std::env::args_os()));
}
