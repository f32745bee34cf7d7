mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use seishet::Error;

use args::{Cli, Command};

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("seishet: {message}");
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message, "exit_code": code }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let message = first.strip_prefix("error: ").unwrap_or(first).to_string();
            eprintln!("{}", serde_json::json!({ "error": "usage", "message": message, "exit_code": 2 }));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Info(a) => commands::info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
            report(e.kind(), &e.to_string(), code)
        }
    }
}
