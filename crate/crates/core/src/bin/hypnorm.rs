use std::io::Write;

fn main() {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = hypnorm::cli::run(std::env::args(), &mut out);
    out.flush().ok();
    std::process::exit(code);
}
