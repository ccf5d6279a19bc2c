//! TOML campaign configuration.
//!
//! ```toml
//! out = "out"              # journal, experiment directories, reports
//! filter = ""              # method-name prefix
//! step_budget = 100000     # simulator only
//! parallel = 1             # simulator only
//! overhead_runs = 0        # timed run pairs; 0 skips the measurement
//!
//! [target]
//! backend = "simulator"
//! program = "chain.json"
//! workload = "workload.json"   # optional, defaults to one call of the entry
//!
//! # [target]
//! # backend = "external"
//! # launch = "./run-target.sh"
//! # health_check = "./check.sh"
//! # restart = "./restart.sh"
//! # working_dir = "."
//!
//! [oracle]
//! check = "baseline"       # baseline | baseline_contains | trace_exact | trace_contains | command
//! require_normal_exit = true
//! timeout_ms = 60000
//! # expected = ["a", "b"]  # trace_exact / trace_contains
//! # command = "./judge.sh" # command; trace on stdin, exit 0 accepts
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::controller::{
    CampaignConfig, ExternalTarget, OracleSource, SimulatorTarget, Target, DEFAULT_STEP_BUDGET,
    DEFAULT_TIMEOUT_MS,
};
use crate::model::{AcceptabilityOracle, DomainCheck};
use crate::simprog::{parse_program, parse_workload, ProgramModel, WorkloadSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn invalid(path: &Path, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_out")]
    out: PathBuf,
    #[serde(default)]
    filter: String,
    #[serde(default = "default_step_budget")]
    step_budget: u64,
    #[serde(default = "default_parallel")]
    parallel: usize,
    #[serde(default)]
    overhead_runs: usize,
    target: RawTarget,
    #[serde(default)]
    oracle: RawOracle,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_step_budget() -> u64 {
    DEFAULT_STEP_BUDGET
}

fn default_parallel() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
enum RawTarget {
    Simulator {
        program: PathBuf,
        workload: Option<PathBuf>,
    },
    External {
        launch: String,
        health_check: String,
        restart: String,
        working_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    check: Option<String>,
    require_normal_exit: Option<bool>,
    timeout_ms: Option<u64>,
    expected: Option<Vec<String>>,
    command: Option<String>,
}

#[derive(Debug, Clone)]
pub enum TargetConfig {
    Simulator {
        program: ProgramModel,
        workload: WorkloadSpec,
    },
    External(ExternalTarget),
}

impl TargetConfig {
    pub fn is_simulator(&self) -> bool {
        matches!(self, TargetConfig::Simulator { .. })
    }

    pub fn build(&self) -> Result<Box<dyn Target>, crate::simprog::ProgramError> {
        Ok(match self {
            TargetConfig::Simulator { program, workload } => {
                Box::new(SimulatorTarget::new(program, workload.clone())?)
            }
            TargetConfig::External(t) => Box::new(t.clone()),
        })
    }
}

/// A validated configuration with every path resolved.
#[derive(Debug, Clone)]
pub struct CampaignFile {
    pub out: PathBuf,
    pub target: TargetConfig,
    pub campaign: CampaignConfig,
    pub overhead_runs: usize,
}

impl CampaignFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(path, e.to_string()))?;
        Self::parse(&text, path)
    }

    /// Parses `text` as if read from `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| invalid(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let read = |p: &Path| {
            let p = resolve(p);
            std::fs::read_to_string(&p).map_err(|e| invalid(&p, e.to_string()))
        };

        if raw.step_budget == 0 {
            return Err(invalid(path, "step_budget must be positive"));
        }
        if raw.parallel == 0 {
            return Err(invalid(path, "parallel must be at least 1"));
        }
        let target = match raw.target {
            RawTarget::Simulator { program, workload } => {
                let src = read(&program)?;
                let program =
                    parse_program(&src).map_err(|e| invalid(&resolve(&program), e.to_string()))?;
                let workload = match workload {
                    Some(w) => {
                        let src = read(&w)?;
                        parse_workload(&src, &program)
                            .map_err(|e| invalid(&resolve(&w), e.to_string()))?
                    }
                    None => WorkloadSpec::entry_once(&program),
                };
                TargetConfig::Simulator { program, workload }
            }
            RawTarget::External {
                launch,
                health_check,
                restart,
                working_dir,
            } => {
                for (name, cmd) in [
                    ("launch", &launch),
                    ("health_check", &health_check),
                    ("restart", &restart),
                ] {
                    if cmd.trim().is_empty() {
                        return Err(invalid(path, format!("target.{name} is empty")));
                    }
                }
                if raw.parallel > 1 {
                    return Err(invalid(path, "parallel > 1 requires the simulator backend"));
                }
                TargetConfig::External(ExternalTarget {
                    launch,
                    health_check,
                    restart,
                    working_dir: resolve(working_dir.as_deref().unwrap_or(Path::new("."))),
                })
            }
        };
        let oracle = oracle_source(raw.oracle, path)?;
        Ok(Self {
            out: resolve(&raw.out),
            target,
            campaign: CampaignConfig {
                oracle,
                filter: raw.filter,
                step_budget: raw.step_budget,
                parallelism: raw.parallel,
                experiment_root: None,
            },
            overhead_runs: raw.overhead_runs,
        })
    }

    pub fn journal_path(&self) -> PathBuf {
        self.out.join("journal.jsonl")
    }

    pub fn experiments_dir(&self) -> PathBuf {
        self.out.join("experiments")
    }
}

fn oracle_source(raw: RawOracle, path: &Path) -> Result<OracleSource, ConfigError> {
    let require_normal_exit = raw.require_normal_exit.unwrap_or(true);
    let timeout_ms = raw.timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS);
    if timeout_ms == 0 {
        return Err(invalid(path, "oracle.timeout_ms must be positive"));
    }
    let check = raw.check.as_deref().unwrap_or("baseline");
    let unused = |field: &str, present: bool| {
        if present {
            Err(invalid(
                path,
                format!("oracle.{field} is not used by check `{check}`"),
            ))
        } else {
            Ok(())
        }
    };
    let fixed = |domain| {
        let o = AcceptabilityOracle {
            require_normal_exit,
            timeout_ms,
            domain,
        };
        o.validate().map_err(|e| invalid(path, e.to_string()))?;
        Ok(OracleSource::Fixed(o))
    };
    match check {
        "baseline" | "baseline_contains" => {
            unused("expected", raw.expected.is_some())?;
            unused("command", raw.command.is_some())?;
            Ok(OracleSource::BaselineTrace {
                require_normal_exit,
                timeout_ms,
                contains: check == "baseline_contains",
            })
        }
        "trace_exact" | "trace_contains" => {
            unused("command", raw.command.is_some())?;
            let expected = raw
                .expected
                .ok_or_else(|| invalid(path, format!("check `{check}` needs oracle.expected")))?;
            fixed(if check == "trace_exact" {
                DomainCheck::TraceExact { expected }
            } else {
                DomainCheck::TraceContains { expected }
            })
        }
        "command" => {
            unused("expected", raw.expected.is_some())?;
            let command = raw
                .command
                .ok_or_else(|| invalid(path, "check `command` needs oracle.command"))?;
            fixed(DomainCheck::ExternalCommand { command })
        }
        other => Err(invalid(path, format!("unknown oracle.check `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROGRAM: &str =
        r#"{"format_version": 1, "entry": "main", "methods": {"main": {"body": [{"emit": "a"}]}}}"#;

    fn setup(config: &str) -> (tempfile::TempDir, Result<CampaignFile, ConfigError>) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.json"), PROGRAM).unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, config).unwrap();
        let r = CampaignFile::load(&path);
        (dir, r)
    }

    #[test]
    fn minimal_simulator_config() {
        let (dir, cfg) = setup("[target]\nbackend = \"simulator\"\nprogram = \"p.json\"\n");
        let cfg = cfg.unwrap();
        assert_eq!(cfg.out, dir.path().join("out"));
        assert!(cfg.target.is_simulator());
        assert_eq!(cfg.campaign.oracle, OracleSource::baseline_exact());
        assert_eq!(cfg.campaign.parallelism, 1);
    }

    #[test]
    fn fixed_oracle() {
        let (_d, cfg) = setup(
            "[target]\nbackend = \"simulator\"\nprogram = \"p.json\"\n\
             [oracle]\ncheck = \"trace_contains\"\nexpected = [\"a\"]\ntimeout_ms = 5\n",
        );
        match cfg.unwrap().campaign.oracle {
            OracleSource::Fixed(o) => {
                assert_eq!(o.timeout_ms, 5);
                assert!(matches!(o.domain, DomainCheck::TraceContains { .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "this is not toml",
            "[target]\nbackend = \"simulator\"\n",
            "[target]\nbackend = \"simulator\"\nprogram = \"missing.json\"\n",
            "[target]\nbackend = \"simulator\"\nprogram = \"p.json\"\nbogus = 1\n",
            "step_budget = 0\n[target]\nbackend = \"simulator\"\nprogram = \"p.json\"\n",
            "[target]\nbackend = \"simulator\"\nprogram = \"p.json\"\n[oracle]\ncheck = \"trace_exact\"\n",
            "[target]\nbackend = \"simulator\"\nprogram = \"p.json\"\n[oracle]\ncheck = \"nope\"\n",
            "parallel = 2\n[target]\nbackend = \"external\"\nlaunch = \"x\"\nhealth_check = \"y\"\nrestart = \"z\"\n",
            "[target]\nbackend = \"external\"\nlaunch = \"\"\nhealth_check = \"y\"\nrestart = \"z\"\n",
        ] {
            let (_d, cfg) = setup(bad);
            assert!(cfg.is_err(), "accepted: {bad}");
        }
    }
}
