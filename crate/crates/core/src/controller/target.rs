//! Campaign targets: the in-process interpreter and external processes
//! driven through the activation file / monitor log channel.

use std::fs;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Observation;
use crate::protocol::{
    parse_monitor_log, write_activation, ActivationFile, ProtocolError, ENV_CONFIG, ENV_LOG,
    FREEZE_EXIT_CODE,
};
use crate::simprog::{Interpreter, ProgramError, ProgramModel, WorkloadSpec};

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("failed to launch `{command}`: {source}")]
    Launch {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Health {
    Healthy,
    Restarted,
    Unrecoverable,
}

/// Something a campaign can execute under an activation.
pub trait Target: Sync {
    /// Runs the workload once. `dir` is the experiment directory, when the
    /// campaign persists one.
    fn run(
        &self,
        activation: &ActivationFile,
        dir: Option<&Path>,
    ) -> Result<Observation, TargetError>;

    /// Runs the workload with agents detached; used for overhead timing.
    fn run_uninstrumented(&self, activation: &ActivationFile) -> Result<(), TargetError>;

    /// Checks the environment between experiments, restarting it if needed.
    fn health_check_and_restart(&self) -> Result<Health, TargetError>;

    /// Whether experiments may run concurrently.
    fn supports_parallel(&self) -> bool {
        false
    }

    /// Working directory for external oracle commands.
    fn work_dir(&self) -> Option<&Path> {
        None
    }
}

/// Interprets a program model in-process. Stateless, so always healthy.
#[derive(Debug)]
pub struct SimulatorTarget {
    interpreter: Interpreter,
    workload: WorkloadSpec,
}

impl SimulatorTarget {
    pub fn new(program: &ProgramModel, workload: WorkloadSpec) -> Result<Self, ProgramError> {
        workload.validate(program)?;
        Ok(Self {
            interpreter: Interpreter::new(program),
            workload,
        })
    }
}

impl Target for SimulatorTarget {
    fn run(
        &self,
        activation: &ActivationFile,
        _dir: Option<&Path>,
    ) -> Result<Observation, TargetError> {
        Ok(self
            .interpreter
            .execute(
                &self.workload,
                &activation.injection,
                &activation.fo,
                activation.step_budget,
            )?
            .into_observation())
    }

    fn run_uninstrumented(&self, activation: &ActivationFile) -> Result<(), TargetError> {
        self.interpreter
            .execute_uninstrumented(&self.workload, activation.step_budget)?;
        Ok(())
    }

    fn health_check_and_restart(&self) -> Result<Health, TargetError> {
        Ok(Health::Healthy)
    }

    fn supports_parallel(&self) -> bool {
        true
    }
}

/// An out-of-process target launched through `sh -c`.
#[derive(Debug, Clone)]
pub struct ExternalTarget {
    pub launch: String,
    pub health_check: String,
    pub restart: String,
    pub working_dir: PathBuf,
}

struct Finished {
    status: Option<ExitStatus>,
    stdout: String,
    timed_out: bool,
}

impl ExternalTarget {
    fn command(&self, command: &str) -> Command {
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(command)
            .current_dir(&self.working_dir)
            .env_remove(ENV_CONFIG)
            .env_remove(ENV_LOG)
            .stdin(Stdio::null())
            .process_group(0);
        cmd
    }

    fn spawn(&self, mut cmd: Command, command: &str) -> Result<Child, TargetError> {
        cmd.spawn().map_err(|source| TargetError::Launch {
            command: command.to_string(),
            source,
        })
    }

    /// Waits up to `timeout`, killing the whole process group on expiry.
    fn wait(mut child: Child, timeout: Duration) -> Result<Finished, TargetError> {
        let reader = child.stdout.take().map(|mut out| {
            thread::spawn(move || {
                let mut s = String::new();
                let _ = out.read_to_string(&mut s);
                s
            })
        });
        let start = Instant::now();
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if start.elapsed() >= timeout => {
                    timed_out = true;
                    kill_group(&mut child);
                    let _ = child.wait();
                    break None;
                }
                Ok(None) => thread::sleep(Duration::from_millis(2)),
                Err(e) => return Err(TargetError::Io(format!("waiting for target: {e}"))),
            }
        };
        let stdout = reader
            .map(|h| h.join().unwrap_or_default())
            .unwrap_or_default();
        Ok(Finished {
            status,
            stdout,
            timed_out,
        })
    }

    fn run_check(&self, command: &str, timeout: Duration) -> Result<bool, TargetError> {
        let mut cmd = self.command(command);
        cmd.stdout(Stdio::null()).stderr(Stdio::null());
        let child = self.spawn(cmd, command)?;
        let done = Self::wait(child, timeout)?;
        Ok(!done.timed_out && done.status.is_some_and(|s| s.success()))
    }
}

fn kill_group(child: &mut Child) {
    // negative pid addresses the process group created by process_group(0)
    let _ = Command::new("kill")
        .args(["-KILL", "--", &format!("-{}", child.id())])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status();
    let _ = child.kill();
}

const CHECK_TIMEOUT: Duration = Duration::from_secs(60);

impl Target for ExternalTarget {
    fn run(
        &self,
        activation: &ActivationFile,
        dir: Option<&Path>,
    ) -> Result<Observation, TargetError> {
        let scratch;
        let dir = match dir {
            Some(d) => d,
            None => {
                scratch = std::env::temp_dir().join(format!(
                    "oblivion-{}-{}",
                    std::process::id(),
                    SCRATCH.fetch_add(1, std::sync::atomic::Ordering::Relaxed)
                ));
                &scratch
            }
        };
        fs::create_dir_all(dir).map_err(|e| TargetError::Io(format!("{}: {e}", dir.display())))?;
        let config = dir.join("activation.txt");
        let log = dir.join("monitor.log");
        let _ = fs::remove_file(&log);
        write_activation(activation, &config)?;
        let stderr = fs::File::create(dir.join("stderr.txt"))
            .map_err(|e| TargetError::Io(format!("{}: {e}", dir.display())))?;
        let mut cmd = self.command(&self.launch);
        cmd.env(ENV_CONFIG, &config)
            .env(ENV_LOG, &log)
            .stdout(Stdio::piped())
            .stderr(stderr);
        let child = self.spawn(cmd, &self.launch)?;
        let done = Self::wait(child, Duration::from_millis(activation.timeout_ms))?;
        let self_frozen = done.status.and_then(|s| s.code()) == Some(FREEZE_EXIT_CODE);
        let trace = done.stdout.split_whitespace().map(str::to_string).collect();
        let parsed = parse_monitor_log(&log)?;
        Ok(parsed.into_observation(trace, done.timed_out || self_frozen))
    }

    fn run_uninstrumented(&self, activation: &ActivationFile) -> Result<(), TargetError> {
        let mut cmd = self.command(&self.launch);
        cmd.stdout(Stdio::null()).stderr(Stdio::null());
        let child = self.spawn(cmd, &self.launch)?;
        Self::wait(child, Duration::from_millis(activation.timeout_ms))?;
        Ok(())
    }

    fn health_check_and_restart(&self) -> Result<Health, TargetError> {
        if self.run_check(&self.health_check, CHECK_TIMEOUT)? {
            return Ok(Health::Healthy);
        }
        if !self.run_check(&self.restart, CHECK_TIMEOUT)? {
            return Ok(Health::Unrecoverable);
        }
        Ok(if self.run_check(&self.health_check, CHECK_TIMEOUT)? {
            Health::Restarted
        } else {
            Health::Unrecoverable
        })
    }

    fn work_dir(&self) -> Option<&Path> {
        Some(&self.working_dir)
    }
}

static SCRATCH: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
