//! Binary entry point: delegate to the library CLI and surface its exit
//! code.

fn main() {
    std::process::exit(depts::cli::entry(std::env::args_os()));
}
