fn main() {
    std::process::exit(propcoloc::cli::run(std::env::args_os()));
}
