//! File channel between the controller and instrumented targets.
//!
//! Activation file (controller to agents), one record per line:
//!
//! ```text
//! TRIPLEAGENT 1
//! POINT <method> <location> <exception> <FIRST_HIT|ALWAYS>
//! FO <method>
//! BUDGET <steps> <timeout_ms>
//! ```
//!
//! `POINT` appears at most once, `FO` lines are sorted and unique.
//!
//! Monitor log (agents to controller):
//!
//! ```text
//! REACH <method> <location> <exception> <count>
//! INJECT <method> <location> <exception> <callee;...;caller>
//! CATCH <exception> <raiser> <catcher> <distance> <MANUAL|FO_WRAPPER>
//! EXIT <NORMAL|CRASH>
//! ```
//!
//! A log without `EXIT` belongs to a target that died or froze. A final line
//! without its newline is a torn write and is dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::model::{
    CatchEvent, ExitKind, FaultModel, HandlerKind, MethodRef, MonitorEvent, Observation,
    PerturbationPoint,
};
use crate::simprog::{Activation, FoPlan, InjectionPlan};

pub const ACTIVATION_HEADER: &str = "TRIPLEAGENT 1";
/// Environment variable carrying the activation file path.
pub const ENV_CONFIG: &str = "TRIPLEAGENT_CONFIG";
/// Environment variable carrying the monitor log path.
pub const ENV_LOG: &str = "TRIPLEAGENT_LOG";
/// Process exit status a target uses to report that it froze on its own
/// (e.g. the simulator exhausting its step budget).
pub const FREEZE_EXIT_CODE: i32 = 124;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("method {0} does not occur in the stack")]
    AbsentMethod(MethodRef),
}

fn malformed(line: usize, message: impl Into<String>) -> ProtocolError {
    ProtocolError::Malformed {
        line,
        message: message.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProtocolError + '_ {
    move |source| ProtocolError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationFile {
    pub injection: InjectionPlan,
    pub fo: FoPlan,
    pub step_budget: u64,
    pub timeout_ms: u64,
}

impl ActivationFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(ACTIVATION_HEADER);
        out.push('\n');
        if let Some(a) = &self.injection.active {
            let p = &a.point;
            let _ = writeln!(
                out,
                "POINT {} {} {} {}",
                p.method, p.location, p.exception, a.fault_model
            );
        }
        for h in &self.fo.active_handlers {
            let _ = writeln!(out, "FO {h}");
        }
        let _ = writeln!(out, "BUDGET {} {}", self.step_budget, self.timeout_ms);
        out
    }

    /// Strict parser: accepts exactly the canonical layout produced by
    /// [`ActivationFile::to_text`].
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let lines = complete_lines(text).ok_or_else(|| {
            malformed(
                text.lines().count().max(1),
                "activation file must end with a newline",
            )
        })?;
        let mut it = lines
            .iter()
            .enumerate()
            .map(|(i, l)| (i + 1, *l))
            .peekable();
        match it.next() {
            Some((_, ACTIVATION_HEADER)) => {}
            Some((n, other)) => return Err(malformed(n, format!("bad header {other:?}"))),
            None => return Err(malformed(1, "empty activation file")),
        }
        let mut injection = InjectionPlan::none();
        if let Some((n, line)) = it.peek().copied() {
            if line.starts_with("POINT ") {
                it.next();
                let f = fields(line, 5, n)?;
                let point =
                    PerturbationPoint::new(method(f[1], n)?, number(f[2], n)?, exception(f[3], n)?);
                let fault_model = FaultModel::from_str(f[4]).map_err(|e| malformed(n, e))?;
                injection.active = Some(Activation { point, fault_model });
            }
        }
        let mut fo = FoPlan::none();
        let mut last: Option<MethodRef> = None;
        while let Some((n, line)) = it.peek().copied() {
            if !line.starts_with("FO ") {
                break;
            }
            it.next();
            let f = fields(line, 2, n)?;
            let h = method(f[1], n)?;
            if last.as_ref().is_some_and(|l| *l >= h) {
                return Err(malformed(n, "FO lines must be sorted and unique"));
            }
            last = Some(h.clone());
            fo.active_handlers.insert(h);
        }
        let (n, line) = it
            .next()
            .ok_or_else(|| malformed(lines.len() + 1, "missing BUDGET"))?;
        if !line.starts_with("BUDGET ") {
            return Err(malformed(n, format!("unexpected record {line:?}")));
        }
        let f = fields(line, 3, n)?;
        let step_budget = number(f[1], n)?;
        let timeout_ms = number(f[2], n)?;
        if let Some((n, line)) = it.next() {
            return Err(malformed(n, format!("trailing record {line:?}")));
        }
        Ok(Self {
            injection,
            fo,
            step_budget,
            timeout_ms,
        })
    }
}

/// Writes and fsyncs the activation file.
pub fn write_activation(activation: &ActivationFile, path: &Path) -> Result<(), ProtocolError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(activation.to_text().as_bytes())
        .map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

pub fn read_activation(path: &Path) -> Result<ActivationFile, ProtocolError> {
    ActivationFile::parse(&fs::read_to_string(path).map_err(io_err(path))?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogRecord {
    Reach {
        point: PerturbationPoint,
        count: u64,
    },
    Inject {
        point: PerturbationPoint,
        stack: Vec<MethodRef>,
    },
    Catch(CatchEvent),
    Exit(ExitKind),
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        match self {
            LogRecord::Reach { point, count } => format!(
                "REACH {} {} {} {}",
                point.method, point.location, point.exception, count
            ),
            LogRecord::Inject { point, stack } => {
                let stack: Vec<&str> = stack.iter().map(MethodRef::as_str).collect();
                format!(
                    "INJECT {} {} {} {}",
                    point.method,
                    point.location,
                    point.exception,
                    stack.join(";")
                )
            }
            LogRecord::Catch(c) => format!(
                "CATCH {} {} {} {} {}",
                c.exception,
                c.raiser,
                c.catcher,
                c.stack_distance,
                c.handler_kind.as_str()
            ),
            LogRecord::Exit(ExitKind::Normal) => "EXIT NORMAL".into(),
            // a frozen target never gets to write its exit record
            LogRecord::Exit(_) => "EXIT CRASH".into(),
        }
    }

    fn parse(line: &str, n: usize) -> Result<Self, ProtocolError> {
        let tag = line.split(' ').next().unwrap_or_default();
        match tag {
            "REACH" => {
                let f = fields(line, 5, n)?;
                Ok(LogRecord::Reach {
                    point: PerturbationPoint::new(
                        method(f[1], n)?,
                        number(f[2], n)?,
                        exception(f[3], n)?,
                    ),
                    count: number(f[4], n)?,
                })
            }
            "INJECT" => {
                let f = fields(line, 5, n)?;
                let stack = f[4]
                    .split(';')
                    .map(|m| method(m, n))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(LogRecord::Inject {
                    point: PerturbationPoint::new(
                        method(f[1], n)?,
                        number(f[2], n)?,
                        exception(f[3], n)?,
                    ),
                    stack,
                })
            }
            "CATCH" => {
                let f = fields(line, 6, n)?;
                let handler_kind = match f[5] {
                    "MANUAL" => HandlerKind::Manual,
                    "FO_WRAPPER" => HandlerKind::FoWrapper,
                    other => return Err(malformed(n, format!("unknown handler kind {other:?}"))),
                };
                Ok(LogRecord::Catch(CatchEvent {
                    exception: exception(f[1], n)?,
                    raiser: method(f[2], n)?,
                    catcher: method(f[3], n)?,
                    stack_distance: number(f[4], n)?,
                    handler_kind,
                }))
            }
            "EXIT" => {
                let f = fields(line, 2, n)?;
                match f[1] {
                    "NORMAL" => Ok(LogRecord::Exit(ExitKind::Normal)),
                    "CRASH" => Ok(LogRecord::Exit(ExitKind::Crash)),
                    other => Err(malformed(n, format!("unknown exit status {other:?}"))),
                }
            }
            other => Err(malformed(n, format!("unknown record {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MonitorLog {
    pub records: Vec<LogRecord>,
}

impl MonitorLog {
    /// Log an agent would write for `obs`: reach counts first, then events
    /// in order, then the exit record unless the run froze.
    pub fn from_observation(obs: &Observation) -> Self {
        let mut records: Vec<LogRecord> = obs
            .reach_counts
            .iter()
            .map(|(p, c)| LogRecord::Reach {
                point: p.clone(),
                count: *c,
            })
            .collect();
        records.extend(obs.events.iter().map(|e| match e {
            MonitorEvent::Inject { point, stack } => LogRecord::Inject {
                point: point.clone(),
                stack: stack.clone(),
            },
            MonitorEvent::Catch(c) => LogRecord::Catch(c.clone()),
        }));
        if obs.exit != ExitKind::Hang {
            records.push(LogRecord::Exit(obs.exit));
        }
        Self { records }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        // a final line without newline is a torn write
        let body = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        let mut records = Vec::new();
        let mut seen_reach = BTreeSet::new();
        let mut exited = false;
        for (i, line) in body.lines().enumerate() {
            let n = i + 1;
            if exited {
                return Err(malformed(n, "record after EXIT"));
            }
            let rec = LogRecord::parse(line, n)?;
            match &rec {
                LogRecord::Reach { point, .. } if !seen_reach.insert(point.clone()) => {
                    return Err(malformed(n, format!("duplicate REACH for {point}")));
                }
                LogRecord::Exit(_) => exited = true,
                _ => {}
            }
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn exit(&self) -> Option<ExitKind> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Exit(k) => Some(*k),
            _ => None,
        })
    }

    /// Controller view. A missing `EXIT` means the target crashed hard,
    /// unless the controller saw it time out.
    pub fn into_observation(self, trace: Vec<String>, timed_out: bool) -> Observation {
        let exit = if timed_out {
            ExitKind::Hang
        } else {
            self.exit().unwrap_or(ExitKind::Crash)
        };
        let mut reach_counts = BTreeMap::new();
        let mut events = Vec::new();
        for r in self.records {
            match r {
                LogRecord::Reach { point, count } => {
                    reach_counts.insert(point, count);
                }
                LogRecord::Inject { point, stack } => {
                    events.push(MonitorEvent::Inject { point, stack })
                }
                LogRecord::Catch(c) => events.push(MonitorEvent::Catch(c)),
                LogRecord::Exit(_) => {}
            }
        }
        Observation {
            trace,
            exit,
            reach_counts,
            events,
        }
    }
}

/// Reads a monitor log; a missing file is an empty (truncated) log.
pub fn parse_monitor_log(path: &Path) -> Result<MonitorLog, ProtocolError> {
    match fs::read_to_string(path) {
        Ok(text) => MonitorLog::parse(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(MonitorLog::default()),
        Err(e) => Err(io_err(path)(e)),
    }
}

pub fn write_monitor_log(log: &MonitorLog, path: &Path) -> Result<(), ProtocolError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(log.to_text().as_bytes())
        .map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

/// Frames between the first occurrences of `raiser` and `catcher`.
pub fn stack_distance(
    stack: &[MethodRef],
    raiser: &MethodRef,
    catcher: &MethodRef,
) -> Result<u32, ProtocolError> {
    let find = |m: &MethodRef| {
        stack
            .iter()
            .position(|s| s == m)
            .ok_or_else(|| ProtocolError::AbsentMethod(m.clone()))
    };
    let r = find(raiser)?;
    let c = find(catcher)?;
    Ok(r.abs_diff(c) as u32)
}

/// Lines of `text`, or `None` when the last line lacks its newline.
fn complete_lines(text: &str) -> Option<Vec<&str>> {
    if text.is_empty() {
        return Some(Vec::new());
    }
    let body = text.strip_suffix('\n')?;
    Some(body.split('\n').collect())
}

fn fields(line: &str, count: usize, n: usize) -> Result<Vec<&str>, ProtocolError> {
    let f: Vec<&str> = line.split(' ').collect();
    if f.len() != count || f.iter().any(|s| s.is_empty()) {
        return Err(malformed(
            n,
            format!("expected {count} space-separated fields in {line:?}"),
        ));
    }
    Ok(f)
}

fn method(s: &str, n: usize) -> Result<MethodRef, ProtocolError> {
    MethodRef::new(s).map_err(|e| malformed(n, e.to_string()))
}

fn exception(s: &str, n: usize) -> Result<String, ProtocolError> {
    crate::model::validate_exception_type(s).map_err(|e| malformed(n, e.to_string()))?;
    Ok(s.to_string())
}

fn number<T: FromStr>(s: &str, n: usize) -> Result<T, ProtocolError> {
    // canonical decimal only, so text round-trips byte for byte
    if s.len() > 1 && s.starts_with('0') || s.starts_with('+') {
        return Err(malformed(n, format!("non-canonical number {s:?}")));
    }
    s.parse()
        .map_err(|_| malformed(n, format!("expected a non-negative integer, got {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> MethodRef {
        MethodRef::new(s).unwrap()
    }

    #[test]
    fn empty_plans_have_header_and_budget_only() {
        let a = ActivationFile {
            injection: InjectionPlan::none(),
            fo: FoPlan::none(),
            step_budget: 100000,
            timeout_ms: 60000,
        };
        assert_eq!(a.to_text(), "TRIPLEAGENT 1\nBUDGET 100000 60000\n");
        assert_eq!(ActivationFile::parse(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn point_line_format() {
        let a = ActivationFile {
            injection: InjectionPlan::at(
                PerturbationPoint::new(m("m0"), 2, "IOException"),
                FaultModel::FirstHit,
            ),
            fo: FoPlan::single(m("m1")),
            step_budget: 10,
            timeout_ms: 5,
        };
        let text = a.to_text();
        assert_eq!(
            text,
            "TRIPLEAGENT 1\nPOINT m0 2 IOException FIRST_HIT\nFO m1\nBUDGET 10 5\n"
        );
        assert_eq!(ActivationFile::parse(&text).unwrap(), a);
    }

    #[test]
    fn activation_rejects_noncanonical() {
        for bad in [
            "",
            "TRIPLEAGENT 2\nBUDGET 1 1\n",
            "TRIPLEAGENT 1\nBUDGET 1 1",
            "TRIPLEAGENT 1\nFO b\nFO a\nBUDGET 1 1\n",
            "TRIPLEAGENT 1\nFO a\nPOINT m 0 E ALWAYS\nBUDGET 1 1\n",
            "TRIPLEAGENT 1\nBUDGET 01 1\n",
            "TRIPLEAGENT 1\nBUDGET 1 1\nFO a\n",
            "TRIPLEAGENT 1\nPOINT m 0 E SOMETIMES\nBUDGET 1 1\n",
            "TRIPLEAGENT 1\nBUDGET  1 1\n",
        ] {
            assert!(ActivationFile::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn log_with_injection_and_exit() {
        let text = "REACH m0 0 IOException 1\nINJECT m0 0 IOException m0;m1;m2\nEXIT NORMAL\n";
        let log = MonitorLog::parse(text).unwrap();
        assert_eq!(log.to_text(), text);
        let obs = log.into_observation(vec![], false);
        assert_eq!(obs.exit, ExitKind::Normal);
        let inj: Vec<_> = obs.injections().collect();
        assert_eq!(inj.len(), 1);
        assert_eq!(inj[0].1.len(), 3);
    }

    #[test]
    fn log_without_exit_is_crash_or_freeze() {
        let log = MonitorLog::parse("REACH m0 0 E 3\n").unwrap();
        assert_eq!(
            log.clone().into_observation(vec![], false).exit,
            ExitKind::Crash
        );
        assert_eq!(log.into_observation(vec![], true).exit, ExitKind::Hang);
    }

    #[test]
    fn catch_record_distance() {
        let log = MonitorLog::parse("CATCH IOException m0 m2 2 MANUAL\n").unwrap();
        match &log.records[0] {
            LogRecord::Catch(c) => {
                assert_eq!(c.stack_distance, 2);
                assert_eq!(c.catcher, m("m2"));
                assert_eq!(c.handler_kind, HandlerKind::Manual);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_log_names_line() {
        match MonitorLog::parse("EXIT NORMAL\nEXIT NORMAL\n") {
            Err(ProtocolError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match MonitorLog::parse("REACH m0 0 E 1\nCATCH E m0 m1 x MANUAL\n") {
            Err(ProtocolError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(MonitorLog::parse("INJECT m0 0 E \n").is_err());
        assert!(MonitorLog::parse("REACH m0 0 E 1\nREACH m0 0 E 2\n").is_err());
    }

    #[test]
    fn torn_last_line_is_dropped() {
        let log = MonitorLog::parse("REACH m0 0 E 1\nEXIT NORM").unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.exit(), None);
    }

    #[test]
    fn stack_distance_examples() {
        let s = [m("m0"), m("m1"), m("m2")];
        assert_eq!(stack_distance(&s, &m("m0"), &m("m2")).unwrap(), 2);
        assert_eq!(stack_distance(&[m("m0")], &m("m0"), &m("m0")).unwrap(), 0);
        let rec = [m("m0"), m("m1"), m("m0"), m("m2")];
        assert_eq!(stack_distance(&rec, &m("m0"), &m("m2")).unwrap(), 3);
        assert_eq!(stack_distance(&rec, &m("m1"), &m("m0")).unwrap(), 1);
        assert!(matches!(
            stack_distance(&s, &m("m0"), &m("zz")),
            Err(ProtocolError::AbsentMethod(_))
        ));
    }

    #[test]
    fn missing_log_file_reads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let log = parse_monitor_log(&dir.path().join("nope.log")).unwrap();
        assert!(log.records.is_empty());
    }
}
