fn main() -> std::process::ExitCode {
    dpp_cli::run(std::env::args_os())
}
