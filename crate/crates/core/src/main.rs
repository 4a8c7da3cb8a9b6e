fn main() -> std::process::ExitCode {
    landau_factor::cli::main()
}
