fn main() {
    std::process::exit(dna_accel::cli::run_cli(std::env::args_os()));
}
