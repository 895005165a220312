fn main() -> std::process::ExitCode {
    sme_correlate::cli::main()
}
