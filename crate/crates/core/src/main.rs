use std::io;

fn main() {
    let stdin = io::stdin();
    let mut io = codetations::cli::Io {
        stdin: &mut stdin.lock(),
        stdout: &mut io::stdout(),
        stderr: &mut io::stderr(),
    };
    std::process::exit(codetations::cli::run(std::env::args_os(), &mut io));
}
