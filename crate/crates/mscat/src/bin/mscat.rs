use std::process::exit;

fn main() {
    exit(mscat::harness::cli_main(std::env::args_os()));
}
