fn main() {
    std::process::exit(ilrec_cli::run(std::env::args_os()));
}
