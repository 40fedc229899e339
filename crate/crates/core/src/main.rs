use std::io::Write;

fn main() {
    // failures are reported by `run`; keep the default panic text off stderr
    std::panic::set_hook(Box::new(|_| {}));
    let (out, code) = transdiff::cli::run(std::env::args_os(), &mut std::io::stdin());
    let mut stdout = std::io::stdout();
    let _ = stdout.write_all(out.as_bytes());
    std::process::exit(code);
}
