fn main() -> std::process::ExitCode {
    trajedit::cli::main()
}
