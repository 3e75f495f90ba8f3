fn main() {
    std::process::exit(mpmf_core::cli::main());
}
