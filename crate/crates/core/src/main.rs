fn main() -> std::process::ExitCode {
    tidysim::cli::main()
}
