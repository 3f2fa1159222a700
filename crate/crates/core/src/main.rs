fn main() {
    std::process::exit(xxzloc::cli::main_entry());
}
