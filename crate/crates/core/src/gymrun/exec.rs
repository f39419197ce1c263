//! Execution ports: a local process runner, a container runner, and the
//! shared limit-enforcing spawner.

use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use crate::patchkit::MemTree;

use super::GymError;

/// Extra time allowed past the configured limit before a run counts as
/// overdue. Kill latency must stay inside it.
pub const GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy)]
pub struct ExecRequest<'a> {
    pub image_ref: &'a str,
    pub tree: &'a MemTree,
    pub command: &'a str,
    pub time_limit: Duration,
    pub memory_limit: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOutput {
    pub exit_code: Option<i32>,
    /// Interleaved stdout and stderr.
    pub transcript: String,
    pub wall_time: Duration,
    pub timed_out: bool,
    pub oom: bool,
}

/// Runs a command against a private copy of a tree.
pub trait ExecutionPort: Send + Sync {
    fn run(&self, req: &ExecRequest<'_>) -> Result<ExecOutput, GymError>;
}

const OOM_MARKERS: [&str; 4] = [
    "MemoryError",
    "Cannot allocate memory",
    "memory allocation of",
    "JavaScript heap out of memory",
];

fn looks_oom(transcript: &str) -> bool {
    OOM_MARKERS.iter().any(|m| transcript.contains(m))
}

/// Spawns `cmd` in its own process group, enforcing a wall-clock limit by
/// killing the whole group.
fn spawn_limited(
    mut cmd: Command,
    time_limit: Duration,
    address_space: Option<u64>,
    on_timeout: impl FnOnce(),
) -> Result<ExecOutput, GymError> {
    cmd.stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .process_group(0);
    if let Some(bytes) = address_space {
        // SAFETY: setrlimit is async-signal-safe and touches no shared state.
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit {
                    rlim_cur: bytes as libc::rlim_t,
                    rlim_max: bytes as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }
    let start = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| GymError::Exec(format!("spawn failed: {e}")))?;
    let pid = child.id() as i32;
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        let _ = tx.send(buf);
    });

    let deadline = start + time_limit;
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                timed_out = true;
                // SAFETY: plain syscall on a process group we created.
                unsafe {
                    libc::kill(-pid, libc::SIGKILL);
                }
                break child
                    .wait()
                    .map_err(|e| GymError::Exec(format!("wait failed: {e}")))?;
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(10)),
            Err(e) => return Err(GymError::Exec(format!("wait failed: {e}"))),
        }
    };
    if timed_out {
        on_timeout();
    } else {
        // Reap stragglers that outlived the shell.
        // SAFETY: as above.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
    let wall_time = start.elapsed();
    let bytes = rx.recv_timeout(GRACE).unwrap_or_default();
    let transcript = String::from_utf8_lossy(&bytes).into_owned();
    let killed = status.signal() == Some(libc::SIGKILL);
    Ok(ExecOutput {
        exit_code: status.code(),
        oom: !timed_out && (looks_oom(&transcript) || killed),
        transcript,
        wall_time,
        timed_out,
    })
}

fn shell_command(command: &str) -> Command {
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(format!("exec 2>&1\n{command}"));
    cmd
}

fn materialize(tree: &MemTree) -> Result<tempfile::TempDir, GymError> {
    let dir = tempfile::tempdir().map_err(|e| GymError::Io(e.to_string()))?;
    tree.write_to_dir(dir.path())
        .map_err(|e| GymError::Io(e.to_string()))?;
    Ok(dir)
}

/// Runs the command on the host in a temporary checkout. `image_ref` is
/// ignored.
#[derive(Debug, Clone)]
pub struct ProcessExecutor {
    /// Apply the memory limit as an address-space rlimit. Runtimes that
    /// reserve large virtual ranges (Go, V8) may need this off.
    pub limit_address_space: bool,
}

impl Default for ProcessExecutor {
    fn default() -> Self {
        ProcessExecutor {
            limit_address_space: true,
        }
    }
}

impl ExecutionPort for ProcessExecutor {
    fn run(&self, req: &ExecRequest<'_>) -> Result<ExecOutput, GymError> {
        let dir = materialize(req.tree)?;
        let mut cmd = shell_command(req.command);
        cmd.current_dir(dir.path());
        let limit = self.limit_address_space.then_some(req.memory_limit);
        spawn_limited(cmd, req.time_limit, limit, || {})
    }
}

/// Runs the command inside a container built from `image_ref`.
#[derive(Debug, Clone)]
pub struct DockerExecutor {
    pub binary: String,
    pub workdir: String,
}

impl Default for DockerExecutor {
    fn default() -> Self {
        DockerExecutor {
            binary: "docker".into(),
            workdir: "/workspace".into(),
        }
    }
}

impl DockerExecutor {
    pub fn command_line(&self, req: &ExecRequest<'_>, host_dir: &Path, name: &str) -> Vec<String> {
        let mem = format!("{}b", req.memory_limit);
        vec![
            "run".into(),
            "--rm".into(),
            "--name".into(),
            name.into(),
            "--network".into(),
            "none".into(),
            "--memory".into(),
            mem.clone(),
            "--memory-swap".into(),
            mem,
            "-v".into(),
            format!("{}:{}", host_dir.display(), self.workdir),
            "-w".into(),
            self.workdir.clone(),
            req.image_ref.into(),
            "sh".into(),
            "-c".into(),
            format!("exec 2>&1\n{}", req.command),
        ]
    }
}

impl ExecutionPort for DockerExecutor {
    fn run(&self, req: &ExecRequest<'_>) -> Result<ExecOutput, GymError> {
        let dir = materialize(req.tree)?;
        let name = format!(
            "gymrun-{}-{}",
            std::process::id(),
            dir.path()
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        );
        let mut cmd = Command::new(&self.binary);
        cmd.args(self.command_line(req, dir.path(), &name));
        let binary = self.binary.clone();
        let kill_name = name.clone();
        let mut out = spawn_limited(cmd, req.time_limit, None, move || {
            let _ = Command::new(binary)
                .args(["kill", &kill_name])
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status();
        })?;
        // The container runtime reports cgroup OOM kills as 137.
        out.oom = !out.timed_out && (out.exit_code == Some(137) || looks_oom(&out.transcript));
        Ok(out)
    }
}
