fn main() {
    std::process::exit(cohortdef::cli::main_with(std::env::args_os()));
}
