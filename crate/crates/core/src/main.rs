fn main() -> std::process::ExitCode {
    canm::cli::main()
}
