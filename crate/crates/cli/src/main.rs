use std::process::ExitCode;

fn main() -> ExitCode {
    let seed = std::env::var("STAB_SEED").ok();
    let code = stab_cli::run(std::env::args_os(), seed, &mut std::io::stdout().lock());
    ExitCode::from(code)
}
