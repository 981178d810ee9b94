use std::io::{self, Write};

fn main() {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = coherence_mi::cli::main_with_args(std::env::args_os().collect(), &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code);
}
