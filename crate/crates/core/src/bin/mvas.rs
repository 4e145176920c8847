fn main() -> std::process::ExitCode {
    mvas::cli::main()
}
