use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let out = nsteams_cli::run(std::env::args_os());
    let text = match &out.machine {
        Some(v) if out.json => format!("{v:#}\n"),
        _ => out.human.clone(),
    };
    let mut stream: Box<dyn Write> = if out.code == 2 { Box::new(std::io::stderr()) } else { Box::new(std::io::stdout()) };
    // a closed pipe is not worth a panic
    let _ = stream.write_all(text.as_bytes());
    ExitCode::from(out.code)
}
