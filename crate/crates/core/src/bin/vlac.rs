fn main() -> std::process::ExitCode {
    vlac::cli::main()
}
