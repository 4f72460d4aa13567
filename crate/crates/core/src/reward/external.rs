use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use regex::Regex;

use super::{DockingOracle, OracleError};

/// Environment variable overriding the configured timeout, in seconds.
pub const TIMEOUT_ENV: &str = "PHENOGEN_ORACLE_TIMEOUT";

fn score_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*score\s+(\d+)\s+(\S+)\s*$").expect("valid regex"))
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

/// Runs an external docking program once per batch.
///
/// The batch is written to `<workdir>/batch-<n>.smi`, one SMILES per line
/// with LF endings. The command template is run through `sh -c` after
/// substituting `{in}` and `{out}` with the (quoted) input and output paths.
/// Every output line of the form `score <index> <value>` assigns `value` to
/// the 0-based input line `index`; inputs without such a line fail
/// individually. A run exceeding the timeout is killed and every molecule of
/// the batch is marked as timed out.
#[derive(Debug)]
pub struct ExternalOracle {
    template: String,
    workdir: PathBuf,
    timeout: Duration,
    counter: Mutex<u64>,
}

impl ExternalOracle {
    /// `timeout_secs` is replaced by the value of [`TIMEOUT_ENV`] when that
    /// variable holds a positive number.
    pub fn new(template: &str, workdir: &Path, timeout_secs: f64) -> Result<Self, OracleError> {
        if !template.contains("{in}") || !template.contains("{out}") {
            return Err(OracleError::SpawnFailure(
                "command template needs both {in} and {out} placeholders".into(),
            ));
        }
        let secs = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|v| *v > 0.0 && v.is_finite())
            .unwrap_or(timeout_secs);
        if !(secs > 0.0 && secs.is_finite()) {
            return Err(OracleError::SpawnFailure(format!("invalid timeout {secs}")));
        }
        fs::create_dir_all(workdir).map_err(|e| OracleError::SpawnFailure(format!("{}: {e}", workdir.display())))?;
        Ok(ExternalOracle {
            template: template.to_string(),
            workdir: workdir.to_path_buf(),
            timeout: Duration::from_secs_f64(secs),
            counter: Mutex::new(0),
        })
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn run(&self, smiles: &[String]) -> Result<String, OracleError> {
        // one batch at a time per oracle; file names stay unique per call
        let mut n = self.counter.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        let input = self.workdir.join(format!("batch-{}.smi", *n));
        let output = self.workdir.join(format!("batch-{}.out", *n));
        let mut text = String::new();
        for s in smiles {
            text.push_str(s);
            text.push('\n');
        }
        let io = |e: std::io::Error| OracleError::SpawnFailure(e.to_string());
        fs::write(&input, text).map_err(io)?;
        let _ = fs::remove_file(&output);
        let cmd = self
            .template
            .replace("{in}", &shell_quote(&input))
            .replace("{out}", &shell_quote(&output));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .current_dir(&self.workdir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(io)?;
        let start = Instant::now();
        loop {
            match child.try_wait().map_err(io)? {
                Some(status) if status.success() => break,
                Some(status) => {
                    return Err(OracleError::SpawnFailure(format!("command exited with {status}")));
                }
                None if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(OracleError::Timeout(self.timeout.as_secs_f64()));
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        }
        fs::read_to_string(&output)
            .map_err(|e| OracleError::ParseFailure(format!("cannot read {}: {e}", output.display())))
    }
}

/// Extracts index-aligned scores from oracle output.
pub(crate) fn parse_scores(text: &str, n: usize) -> Vec<Result<f64, OracleError>> {
    let mut out: Vec<Result<f64, OracleError>> =
        (0..n).map(|i| Err(OracleError::ParseFailure(format!("no score line for index {i}")))).collect();
    for line in text.lines() {
        let Some(c) = score_line().captures(line.trim_end_matches('\r')) else {
            continue;
        };
        let Ok(idx) = c[1].parse::<usize>() else { continue };
        if idx >= n {
            continue;
        }
        out[idx] = match c[2].parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(OracleError::ParseFailure(format!("bad score `{}` for index {idx}", &c[2]))),
        };
    }
    out
}

impl DockingOracle for ExternalOracle {
    fn score_batch(&self, smiles: &[String]) -> Vec<Result<f64, OracleError>> {
        if smiles.is_empty() {
            return Vec::new();
        }
        match self.run(smiles) {
            Ok(text) => parse_scores(&text, smiles.len()),
            Err(e) => vec![Err(e); smiles.len()],
        }
    }
}
