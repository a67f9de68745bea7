use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = uptodate::cli::main_entry(
        std::env::args_os(),
        std::env::var_os(uptodate::cli::SEED_ENV),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    ExitCode::from(code)
}
