fn main() {
    std::process::exit(diatomic_dp::cli::main_entry());
}
