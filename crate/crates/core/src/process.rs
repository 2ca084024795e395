//! Line-oriented JSON exchange with helper processes.

use std::io::Write;
use std::process::{Command, Stdio};

/// Runs `command` once, feeding `input` on stdin, and returns its trimmed
/// stdout. Non-zero exits are errors carrying stderr.
pub(crate) fn run_once(command: &[String], input: &str) -> Result<String, String> {
    let (program, args) = command.split_first().ok_or_else(|| "empty command".to_string())?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("cannot start {program}: {e}"))?;
    {
        let mut stdin = child.stdin.take().expect("stdin is piped");
        // A helper may exit without reading everything; that is its call.
        let _ = stdin.write_all(input.as_bytes());
        let _ = stdin.write_all(b"\n");
    }
    let out = child.wait_with_output().map_err(|e| format!("{program}: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "{program} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}
