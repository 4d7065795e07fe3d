fn main() {
    std::process::exit(spiking_ctc::cli::run_command(std::env::args_os()));
}
