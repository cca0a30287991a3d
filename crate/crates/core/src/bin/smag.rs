fn main() {
    std::process::exit(stokes_magneto::cli::cli_main(std::env::args_os()));
}
