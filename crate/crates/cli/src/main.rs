fn main() -> std::process::ExitCode {
    mpa_cli::main_exit()
}
