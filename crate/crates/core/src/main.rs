fn main() -> std::process::ExitCode {
    quench_control::cli::main()
}
