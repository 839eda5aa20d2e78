//! External-process guests speaking a line protocol over stdin/stdout.
//!
//! A request is the code followed by a `\x1eEND` line. The guest answers with
//! one `\x1eCOPILOT {json}` line carrying stdout, stderr, the error (if any)
//! and paths of PNG files it wrote to a private scratch directory.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam::channel::{self, Receiver, RecvTimeoutError};
use parking_lot::Mutex;
use serde::Deserialize;
use thiserror::Error;

use super::{ExecOutput, Runtime, SandboxBackend, SandboxError, SandboxProcess};

const MARK: &str = "\x1eCOPILOT ";
const END: &str = "\x1eEND";
const PYTHON_DRIVER: &str = include_str!("../../../assets/drivers/python_driver.py");
const R_DRIVER: &str = include_str!("../../../assets/drivers/r_driver.R");
const STARTUP_TIMEOUT: Duration = Duration::from_secs(60);

/// Protocol violations by a guest.
#[derive(Debug, Error)]
#[error("sandbox guest sent a malformed reply: {0}")]
pub struct SandboxProcessError(String);

/// Spawns real interpreters: `python3` for Python and `Rscript` for R.
#[derive(Debug, Clone)]
pub struct ProcessBackend {
    pub python: String,
    pub rscript: String,
}

impl Default for ProcessBackend {
    fn default() -> Self {
        Self {
            python: "python3".into(),
            rscript: "Rscript".into(),
        }
    }
}

impl SandboxBackend for ProcessBackend {
    fn start(
        &self,
        runtime: Runtime,
        workdir: &Path,
    ) -> Result<Box<dyn SandboxProcess>, SandboxError> {
        let scratch =
            std::env::temp_dir().join(format!("copilot-sandbox-{}", uuid::Uuid::new_v4()));
        std::fs::create_dir_all(&scratch)?;
        let mut cmd = match runtime {
            Runtime::Python => {
                let mut c = Command::new(&self.python);
                c.arg("-u").arg("-c").arg(PYTHON_DRIVER).arg(&scratch);
                c.env("MPLBACKEND", "Agg");
                c
            }
            Runtime::R => {
                let mut c = Command::new(&self.rscript);
                c.arg("--vanilla")
                    .arg("-e")
                    .arg(R_DRIVER)
                    .arg("--args")
                    .arg(&scratch);
                c
            }
            Runtime::Julia => {
                return Err(SandboxError::Unavailable {
                    runtime,
                    message: "no process driver for julia".into(),
                })
            }
        };
        cmd.current_dir(workdir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let mut child = cmd.spawn().map_err(|e| SandboxError::Unavailable {
            runtime,
            message: e.to_string(),
        })?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let mut stderr = child.stderr.take().expect("piped");

        let (tx, rx) = channel::unbounded();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stray_stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stray_stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = stderr.read(&mut buf) {
                if n == 0 {
                    break;
                }
                sink.lock().push_str(&String::from_utf8_lossy(&buf[..n]));
            }
        });

        let mut guest = Guest {
            runtime,
            child,
            stdin,
            lines: rx,
            stray_stderr,
            scratch,
        };
        match guest.await_reply(STARTUP_TIMEOUT) {
            Ok(_) => Ok(Box::new(guest)),
            Err(SandboxError::Timeout { .. }) => Err(SandboxError::Unavailable {
                runtime,
                message: "guest did not start in time".into(),
            }),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Reply {
    #[serde(default)]
    stdout: String,
    #[serde(default)]
    stderr: String,
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    images: Vec<PathBuf>,
}

struct Guest {
    runtime: Runtime,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    stray_stderr: Arc<Mutex<String>>,
    scratch: PathBuf,
}

impl Guest {
    /// Waits for the next protocol line; anything else the guest prints is
    /// returned as stray output.
    fn await_reply(&mut self, limit: Duration) -> Result<(String, String), SandboxError> {
        let deadline = Instant::now() + limit;
        let mut stray = String::new();
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) => match line.strip_prefix(MARK) {
                    Some(json) => return Ok((json.to_string(), stray)),
                    None => {
                        stray.push_str(&line);
                        stray.push('\n');
                    }
                },
                Err(RecvTimeoutError::Timeout) => {
                    let _ = self.child.kill();
                    return Err(SandboxError::Timeout {
                        runtime: self.runtime,
                        limit,
                    });
                }
                Err(RecvTimeoutError::Disconnected) => {
                    let _ = self.child.wait();
                    let detail = std::mem::take(&mut *self.stray_stderr.lock());
                    return Err(SandboxError::Unavailable {
                        runtime: self.runtime,
                        message: format!("guest exited: {}", detail.trim()),
                    });
                }
            }
        }
    }
}

impl SandboxProcess for Guest {
    fn exec(&mut self, code: &str, timeout: Duration) -> Result<ExecOutput, SandboxError> {
        let mut request = String::with_capacity(code.len() + 8);
        for line in code.lines() {
            // a bare END line inside user code would end the frame early
            request.push_str(if line == END { "" } else { line });
            request.push('\n');
        }
        request.push_str(END);
        request.push('\n');
        self.stdin.write_all(request.as_bytes())?;
        self.stdin.flush()?;

        let (json, stray) = self.await_reply(timeout)?;
        let reply: Reply = serde_json::from_str(&json).map_err(|e| {
            SandboxError::Io(std::io::Error::other(SandboxProcessError(e.to_string())))
        })?;
        let mut images = Vec::new();
        for path in &reply.images {
            images.push(std::fs::read(path)?);
            let _ = std::fs::remove_file(path);
        }
        let mut stderr = reply.stderr;
        stderr.push_str(&std::mem::take(&mut *self.stray_stderr.lock()));
        Ok(ExecOutput {
            stdout: stray + &reply.stdout,
            stderr,
            error: reply.error,
            images,
        })
    }
}

impl Drop for Guest {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
        let _ = std::fs::remove_dir_all(&self.scratch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn python_available() -> bool {
        Command::new("python3").arg("--version").output().is_ok()
    }

    #[test]
    fn python_guest_keeps_state_and_reports_errors() {
        if !python_available() {
            eprintln!("python3 not installed; skipping");
            return;
        }
        let dir = tempfile::tempdir().unwrap();
        let mut g = ProcessBackend::default()
            .start(Runtime::Python, dir.path())
            .unwrap();
        let t = Duration::from_secs(30);
        assert_eq!(g.exec("a = 41", t).unwrap().error, None);
        let out = g.exec("print(a + 1)\na * 2", t).unwrap();
        assert_eq!(out.stdout, "42\n82\n");
        let out = g.exec("def f(:\n  pass", t).unwrap();
        assert!(out.error.unwrap().contains("SyntaxError"));
        let out = g.exec("1/0", t).unwrap();
        assert!(out
            .error
            .unwrap()
            .ends_with("ZeroDivisionError: division by zero"));
        let out = g.exec("import os\nprint(os.getcwd())", t).unwrap();
        assert_eq!(
            Path::new(out.stdout.trim()).canonicalize().unwrap(),
            dir.path().canonicalize().unwrap()
        );
    }

    #[test]
    fn python_guest_times_out() {
        if !python_available() {
            return;
        }
        let dir = tempfile::tempdir().unwrap();
        let mut g = ProcessBackend::default()
            .start(Runtime::Python, dir.path())
            .unwrap();
        let err = g
            .exec("import time\ntime.sleep(5)", Duration::from_millis(300))
            .unwrap_err();
        assert!(matches!(err, SandboxError::Timeout { .. }));
    }

    #[test]
    fn matplotlib_figures_are_captured() {
        if !python_available()
            || !Command::new("python3")
                .args(["-c", "import matplotlib"])
                .status()
                .is_ok_and(|s| s.success())
        {
            return;
        }
        let dir = tempfile::tempdir().unwrap();
        let mut g = ProcessBackend::default()
            .start(Runtime::Python, dir.path())
            .unwrap();
        let out = g
            .exec(
                "import matplotlib.pyplot as plt\nplt.plot([1, 2], [3, 4])\nplt.show()",
                Duration::from_secs(60),
            )
            .unwrap();
        assert_eq!(out.error, None, "{}", out.stderr);
        assert_eq!(out.images.len(), 1);
        assert!(out.images[0].starts_with(b"\x89PNG"));
    }

    #[test]
    fn missing_interpreter_is_unavailable() {
        let backend = ProcessBackend {
            python: "definitely-not-a-python".into(),
            rscript: "definitely-not-rscript".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        for rt in [Runtime::Python, Runtime::R, Runtime::Julia] {
            let err = backend.start(rt, dir.path()).err().expect("must fail");
            assert!(matches!(err, SandboxError::Unavailable { .. }), "{err}");
        }
    }
}
