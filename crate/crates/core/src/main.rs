fn main() -> std::process::ExitCode {
    ecodyn::cli::main()
}
