use std::fmt::Display;
use std::path::Path;

use serde_json::json;

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Usage = 1,
    Invalid = 2,
    Io = 3,
}

/// A failed subcommand, reported as one JSON line on stderr.
#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub kind: &'static str,
    pub message: String,
    pub path: Option<String>,
}

impl Failure {
    pub fn new(exit: Exit, kind: &'static str, message: impl Display) -> Self {
        Failure {
            exit,
            kind,
            message: message.to_string(),
            path: None,
        }
    }

    pub fn usage(message: impl Display) -> Self {
        Failure::new(Exit::Usage, "usage", message)
    }

    pub fn invalid(kind: &'static str, message: impl Display) -> Self {
        Failure::new(Exit::Invalid, kind, message)
    }

    pub fn at(mut self, path: &Path) -> Self {
        self.path = Some(path.display().to_string());
        self
    }

    pub fn to_json_line(&self) -> String {
        let mut v = json!({
            "level": "error",
            "kind": self.kind,
            "message": self.message,
            "exit_code": self.exit as i32,
        });
        if let Some(p) = &self.path {
            v["path"] = json!(p);
        }
        v.to_string()
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| Failure::new(Exit::Io, "io", e).at(path))
}

/// Writes to `path`, or to stdout when `path` is `None` or `-`.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    use std::io::Write;
    match path {
        Some(p) if p.as_os_str() != "-" => {
            std::fs::write(p, bytes).map_err(|e| Failure::new(Exit::Io, "io", e).at(p))
        }
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| Failure::new(Exit::Io, "io", e))
        }
    }
}
