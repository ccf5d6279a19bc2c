//! Domain model and the pure decision logic of a campaign.
//!
//! Everything here is free of I/O except [`evaluate_oracle`] when the
//! oracle delegates to an external command.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid method name {0:?}: must be non-empty and use only [A-Za-z0-9_/$.]")]
    InvalidMethodName(String),
    #[error("invalid exception type {0:?}: must be non-empty and use only [A-Za-z0-9_/$.]")]
    InvalidExceptionType(String),
    #[error("classify requires executed verdicts, got NOT_RUN")]
    VerdictNotRun,
    #[error("category UNREACHED has no rank")]
    Unreached,
    #[error("downgrade from {original} to {achieved} is not a valid transition")]
    Downgrade {
        original: PointCategory,
        achieved: PointCategory,
    },
    #[error("oracle payload invalid: {0}")]
    InvalidOracle(String),
}

fn is_wire_safe(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'/' | b'$' | b'.'))
}

/// Fully-qualified method name, e.g. `Class1/exampleMethod`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MethodRef(String);

impl MethodRef {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if is_wire_safe(&name) {
            Ok(Self(name))
        } else {
            Err(ModelError::InvalidMethodName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for MethodRef {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<MethodRef> for String {
    fn from(value: MethodRef) -> Self {
        value.0
    }
}

impl FromStr for MethodRef {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for MethodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Checks an exception type name against the same character set as methods.
pub fn validate_exception_type(name: &str) -> Result<(), ModelError> {
    if is_wire_safe(name) {
        Ok(())
    } else {
        Err(ModelError::InvalidExceptionType(name.to_string()))
    }
}

/// A place where an exception of `exception` type can be raised: before the
/// statement at `location` of `method`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PerturbationPoint {
    pub method: MethodRef,
    pub location: u32,
    pub exception: String,
}

impl PerturbationPoint {
    pub fn new(method: MethodRef, location: u32, exception: impl Into<String>) -> Self {
        Self {
            method,
            location,
            exception: exception.into(),
        }
    }
}

impl fmt::Display for PerturbationPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}:{}", self.method, self.location, self.exception)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultModel {
    /// Inject once, on the first reach of the point.
    FirstHit,
    /// Inject on every reach of the point.
    Always,
}

impl FaultModel {
    pub const ALL: [FaultModel; 2] = [FaultModel::FirstHit, FaultModel::Always];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultModel::FirstHit => "FIRST_HIT",
            FaultModel::Always => "ALWAYS",
        }
    }
}

impl fmt::Display for FaultModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FIRST_HIT" => Ok(FaultModel::FirstHit),
            "ALWAYS" => Ok(FaultModel::Always),
            other => Err(format!("unknown fault model {other:?}")),
        }
    }
}

/// Resilience category of a perturbation point.
///
/// The first three are totally ordered by [`PointCategory::rank`];
/// `Unreached` has no rank and never enters a transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PointCategory {
    Fragile,
    Sensitive,
    Immunized,
    Unreached,
}

impl PointCategory {
    pub const RANKED: [PointCategory; 3] = [
        PointCategory::Fragile,
        PointCategory::Sensitive,
        PointCategory::Immunized,
    ];

    pub fn rank(self) -> Option<u8> {
        match self {
            PointCategory::Fragile => Some(0),
            PointCategory::Sensitive => Some(1),
            PointCategory::Immunized => Some(2),
            PointCategory::Unreached => None,
        }
    }

    fn ranked(self) -> Result<u8, ModelError> {
        self.rank().ok_or(ModelError::Unreached)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PointCategory::Fragile => "fragile",
            PointCategory::Sensitive => "sensitive",
            PointCategory::Immunized => "immunized",
            PointCategory::Unreached => "unreached",
        }
    }

    /// Sort key placing unreached points last.
    pub fn sort_key(self) -> u8 {
        self.rank().unwrap_or(3)
    }
}

impl PartialOrd for PointCategory {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        match (self.rank(), other.rank()) {
            (Some(a), Some(b)) => Some(a.cmp(&b)),
            _ if self == other => Some(std::cmp::Ordering::Equal),
            _ => None,
        }
    }
}

impl fmt::Display for PointCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictReason {
    Ok,
    Crash,
    Freeze,
    DomainCheckFailed,
    NotRun,
}

/// Outcome of checking one execution against the acceptability oracle.
///
/// Only the reason is stored so `passed` can never disagree with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub reason: VerdictReason,
}

impl OracleVerdict {
    pub const OK: OracleVerdict = OracleVerdict {
        reason: VerdictReason::Ok,
    };

    pub fn fail(reason: VerdictReason) -> Self {
        Self { reason }
    }

    pub fn passed(self) -> bool {
        self.reason == VerdictReason::Ok
    }
}

/// Domain-specific half of the oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainCheck {
    /// Emitted trace must equal `expected` token for token.
    TraceExact { expected: Vec<String> },
    /// `expected` must occur in the emitted trace as an in-order subsequence.
    TraceContains { expected: Vec<String> },
    /// Shell command; exit status 0 means pass. The trace is fed on stdin,
    /// one token per line.
    ExternalCommand { command: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptabilityOracle {
    pub require_normal_exit: bool,
    pub timeout_ms: u64,
    pub domain: DomainCheck,
}

impl AcceptabilityOracle {
    pub fn trace_exact(expected: Vec<String>) -> Self {
        Self {
            require_normal_exit: true,
            timeout_ms: 60_000,
            domain: DomainCheck::TraceExact { expected },
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.timeout_ms == 0 {
            return Err(ModelError::InvalidOracle("timeout_ms must be > 0".into()));
        }
        if let DomainCheck::ExternalCommand { command } = &self.domain {
            if command.trim().is_empty() {
                return Err(ModelError::InvalidOracle(
                    "external command is empty".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HandlerKind {
    Manual,
    FoWrapper,
}

impl HandlerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HandlerKind::Manual => "MANUAL",
            HandlerKind::FoWrapper => "FO_WRAPPER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CatchEvent {
    pub exception: String,
    pub raiser: MethodRef,
    pub catcher: MethodRef,
    pub stack_distance: u32,
    pub handler_kind: HandlerKind,
}

/// Chronological monitoring event. Propagation is immediate, so the event
/// following an injection is the catch of that exception, if any.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MonitorEvent {
    Inject {
        point: PerturbationPoint,
        /// Callee first: `stack[0]` is the throwing method.
        stack: Vec<MethodRef>,
    },
    Catch(CatchEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExitKind {
    Normal,
    Crash,
    /// Step budget exhausted or wall-clock timeout.
    Hang,
}

/// Monitoring view of one workload execution, shared by the in-process
/// interpreter and external targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub trace: Vec<String>,
    pub exit: ExitKind,
    pub reach_counts: BTreeMap<PerturbationPoint, u64>,
    pub events: Vec<MonitorEvent>,
}

impl Observation {
    pub fn injections(&self) -> impl Iterator<Item = (&PerturbationPoint, &[MethodRef])> {
        self.events.iter().filter_map(|e| match e {
            MonitorEvent::Inject { point, stack } => Some((point, stack.as_slice())),
            MonitorEvent::Catch(_) => None,
        })
    }

    pub fn catches(&self) -> impl Iterator<Item = &CatchEvent> {
        self.events.iter().filter_map(|e| match e {
            MonitorEvent::Catch(c) => Some(c),
            MonitorEvent::Inject { .. } => None,
        })
    }

    pub fn injection_count(&self, point: &PerturbationPoint) -> usize {
        self.injections().filter(|(p, _)| *p == point).count()
    }

    pub fn reach_count(&self, point: &PerturbationPoint) -> u64 {
        self.reach_counts.get(point).copied().unwrap_or(0)
    }

    /// Stack at the first injection of `point` and the catch event that
    /// stopped that exception (`None` when it escaped the workload).
    pub fn first_injection(
        &self,
        point: &PerturbationPoint,
    ) -> Option<(&[MethodRef], Option<&CatchEvent>)> {
        let idx = self
            .events
            .iter()
            .position(|e| matches!(e, MonitorEvent::Inject { point: p, .. } if p == point))?;
        let MonitorEvent::Inject { stack, .. } = &self.events[idx] else {
            unreachable!()
        };
        let catch = match self.events.get(idx + 1) {
            Some(MonitorEvent::Catch(c)) => Some(c),
            _ => None,
        };
        Some((stack.as_slice(), catch))
    }
}

/// Result of [`classify`]: the category plus whether the verdict pair was
/// the (fail once, pass always) combination with no defined category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classified {
    pub category: PointCategory,
    pub anomaly: bool,
}

/// Truth table over the FIRST_HIT verdict `once` and the ALWAYS verdict
/// `always`.
pub fn classify(once: OracleVerdict, always: OracleVerdict) -> Result<Classified, ModelError> {
    if once.reason == VerdictReason::NotRun || always.reason == VerdictReason::NotRun {
        return Err(ModelError::VerdictNotRun);
    }
    let (category, anomaly) = match (once.passed(), always.passed()) {
        (false, false) => (PointCategory::Fragile, false),
        (true, false) => (PointCategory::Sensitive, false),
        (true, true) => (PointCategory::Immunized, false),
        // worst observed behavior wins
        (false, true) => (PointCategory::Fragile, true),
    };
    Ok(Classified { category, anomaly })
}

/// Upper bound on workload executions: two per point and two per candidate.
pub fn experiment_budget(n_points: u64, n_candidates: u64) -> u64 {
    2 * (n_points + n_candidates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BindingStatus {
    ValidatedImprovement,
    AlternativeResilient,
    NoEffect,
}

pub fn binding_status(
    original: PointCategory,
    achieved: PointCategory,
) -> Result<BindingStatus, ModelError> {
    let (o, a) = (original.ranked()?, achieved.ranked()?);
    Ok(if a > o {
        BindingStatus::ValidatedImprovement
    } else if a == o && original != PointCategory::Fragile {
        BindingStatus::AlternativeResilient
    } else {
        BindingStatus::NoEffect
    })
}

/// Cells of the category transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transition {
    /// fragile stays fragile
    A,
    /// fragile to sensitive
    B,
    /// fragile to immunized
    C,
    /// sensitive stays sensitive
    D,
    /// sensitive to immunized
    E,
    /// immunized stays immunized
    F,
}

impl Transition {
    pub const ALL: [Transition; 6] = [
        Transition::A,
        Transition::B,
        Transition::C,
        Transition::D,
        Transition::E,
        Transition::F,
    ];

    pub fn endpoints(self) -> (PointCategory, PointCategory) {
        use PointCategory::*;
        match self {
            Transition::A => (Fragile, Fragile),
            Transition::B => (Fragile, Sensitive),
            Transition::C => (Fragile, Immunized),
            Transition::D => (Sensitive, Sensitive),
            Transition::E => (Sensitive, Immunized),
            Transition::F => (Immunized, Immunized),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Transition::A => 'a',
            Transition::B => 'b',
            Transition::C => 'c',
            Transition::D => 'd',
            Transition::E => 'e',
            Transition::F => 'f',
        }
    }
}

pub fn transition_label(
    original: PointCategory,
    best_achieved: PointCategory,
) -> Result<Transition, ModelError> {
    let (o, b) = (original.ranked()?, best_achieved.ranked()?);
    if b < o {
        return Err(ModelError::Downgrade {
            original,
            achieved: best_achieved,
        });
    }
    Ok(Transition::ALL
        .into_iter()
        .find(|t| t.endpoints() == (original, best_achieved))
        .expect("six upward pairs cover every ranked combination"))
}

/// A proposal that `handler` can silence exceptions raised at `point`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateBinding {
    pub point: PerturbationPoint,
    pub handler: MethodRef,
}

/// Partition of the detected points.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub fragile: BTreeSet<PerturbationPoint>,
    pub sensitive: BTreeSet<PerturbationPoint>,
    pub immunized: BTreeSet<PerturbationPoint>,
    pub unreached: BTreeSet<PerturbationPoint>,
}

impl Classification {
    pub fn insert(&mut self, point: PerturbationPoint, category: PointCategory) {
        self.set_mut(category).insert(point);
    }

    pub fn set(&self, category: PointCategory) -> &BTreeSet<PerturbationPoint> {
        match category {
            PointCategory::Fragile => &self.fragile,
            PointCategory::Sensitive => &self.sensitive,
            PointCategory::Immunized => &self.immunized,
            PointCategory::Unreached => &self.unreached,
        }
    }

    fn set_mut(&mut self, category: PointCategory) -> &mut BTreeSet<PerturbationPoint> {
        match category {
            PointCategory::Fragile => &mut self.fragile,
            PointCategory::Sensitive => &mut self.sensitive,
            PointCategory::Immunized => &mut self.immunized,
            PointCategory::Unreached => &mut self.unreached,
        }
    }

    pub fn category_of(&self, point: &PerturbationPoint) -> Option<PointCategory> {
        [
            PointCategory::Fragile,
            PointCategory::Sensitive,
            PointCategory::Immunized,
            PointCategory::Unreached,
        ]
        .into_iter()
        .find(|c| self.set(*c).contains(point))
    }

    pub fn len(&self) -> usize {
        self.fragile.len() + self.sensitive.len() + self.immunized.len() + self.unreached.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when the four sets are pairwise disjoint and cover exactly `points`.
    pub fn is_partition_of(&self, points: &BTreeSet<PerturbationPoint>) -> bool {
        let mut seen = BTreeSet::new();
        for c in [
            PointCategory::Fragile,
            PointCategory::Sensitive,
            PointCategory::Immunized,
            PointCategory::Unreached,
        ] {
            for p in self.set(c) {
                if !seen.insert(p) {
                    return false;
                }
            }
        }
        seen.len() == points.len() && points.iter().all(|p| seen.contains(p))
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("external oracle command could not be executed: {0}")]
    NotExecutable(String),
}

/// Judges one execution. Generic checks (freeze, abnormal exit) are
/// evaluated first and short-circuit the domain check.
pub fn evaluate_oracle(
    observation: &Observation,
    oracle: &AcceptabilityOracle,
    work_dir: Option<&Path>,
) -> Result<OracleVerdict, OracleError> {
    match observation.exit {
        ExitKind::Hang => return Ok(OracleVerdict::fail(VerdictReason::Freeze)),
        ExitKind::Crash if oracle.require_normal_exit => {
            return Ok(OracleVerdict::fail(VerdictReason::Crash))
        }
        _ => {}
    }
    let pass = match &oracle.domain {
        DomainCheck::TraceExact { expected } => observation.trace == *expected,
        DomainCheck::TraceContains { expected } => is_subsequence(expected, &observation.trace),
        DomainCheck::ExternalCommand { command } => {
            run_check_command(command, &observation.trace, work_dir)?
        }
    };
    Ok(if pass {
        OracleVerdict::OK
    } else {
        OracleVerdict::fail(VerdictReason::DomainCheckFailed)
    })
}

fn is_subsequence(needle: &[String], haystack: &[String]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

fn run_check_command(
    command: &str,
    trace: &[String],
    work_dir: Option<&Path>,
) -> Result<bool, OracleError> {
    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::null());
    if let Some(dir) = work_dir {
        cmd.current_dir(dir);
    }
    let mut child = cmd
        .spawn()
        .map_err(|e| OracleError::NotExecutable(format!("{command}: {e}")))?;
    if let Some(mut stdin) = child.stdin.take() {
        let mut buf = String::new();
        for t in trace {
            buf.push_str(t);
            buf.push('\n');
        }
        // the command may exit without reading its input
        let _ = stdin.write_all(buf.as_bytes());
    }
    let status = child
        .wait()
        .map_err(|e| OracleError::NotExecutable(format!("{command}: {e}")))?;
    match status.code() {
        Some(126) | Some(127) => Err(OracleError::NotExecutable(format!(
            "{command}: shell reported status {}",
            status.code().unwrap_or_default()
        ))),
        Some(0) => Ok(true),
        _ => Ok(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(reason: VerdictReason) -> OracleVerdict {
        OracleVerdict::fail(reason)
    }

    fn m(name: &str) -> MethodRef {
        MethodRef::new(name).unwrap()
    }

    fn obs(exit: ExitKind, trace: &[&str]) -> Observation {
        Observation {
            trace: trace.iter().map(|s| s.to_string()).collect(),
            exit,
            reach_counts: BTreeMap::new(),
            events: vec![],
        }
    }

    #[test]
    fn classify_truth_table() {
        use VerdictReason::*;
        let fail = v(DomainCheckFailed);
        let ok = OracleVerdict::OK;
        let c = |a, b| classify(a, b).unwrap();
        assert_eq!(c(fail, fail).category, PointCategory::Fragile);
        assert!(!c(fail, fail).anomaly);
        assert_eq!(c(ok, ok).category, PointCategory::Immunized);
        assert_eq!(c(ok, fail).category, PointCategory::Sensitive);
        let odd = c(fail, ok);
        assert_eq!(odd.category, PointCategory::Fragile);
        assert!(odd.anomaly);
        assert_eq!(classify(v(NotRun), ok), Err(ModelError::VerdictNotRun));
        assert_eq!(classify(ok, v(NotRun)), Err(ModelError::VerdictNotRun));
    }

    #[test]
    fn budget_examples() {
        assert_eq!(experiment_budget(1046, 2844), 7780);
        assert_eq!(experiment_budget(372, 722), 2188);
        assert_eq!(experiment_budget(0, 0), 0);
    }

    #[test]
    fn binding_status_examples() {
        use PointCategory::*;
        assert_eq!(
            binding_status(Fragile, Sensitive).unwrap(),
            BindingStatus::ValidatedImprovement
        );
        assert_eq!(
            binding_status(Immunized, Immunized).unwrap(),
            BindingStatus::AlternativeResilient
        );
        assert_eq!(
            binding_status(Sensitive, Sensitive).unwrap(),
            BindingStatus::AlternativeResilient
        );
        assert_eq!(
            binding_status(Fragile, Fragile).unwrap(),
            BindingStatus::NoEffect
        );
        assert_eq!(
            binding_status(Immunized, Fragile).unwrap(),
            BindingStatus::NoEffect
        );
        assert_eq!(
            binding_status(Unreached, Fragile),
            Err(ModelError::Unreached)
        );
        assert_eq!(
            binding_status(Fragile, Unreached),
            Err(ModelError::Unreached)
        );
    }

    #[test]
    fn transition_labels_cover_upward_pairs_only() {
        use PointCategory::*;
        assert_eq!(
            transition_label(Sensitive, Immunized).unwrap(),
            Transition::E
        );
        assert_eq!(transition_label(Fragile, Immunized).unwrap(), Transition::C);
        assert_eq!(
            transition_label(Immunized, Immunized).unwrap(),
            Transition::F
        );
        let mut defined = 0;
        for o in PointCategory::RANKED {
            for b in PointCategory::RANKED {
                match transition_label(o, b) {
                    Ok(t) => {
                        defined += 1;
                        assert_eq!(t.endpoints(), (o, b));
                    }
                    Err(e) => {
                        assert!(b.rank() < o.rank());
                        assert!(matches!(e, ModelError::Downgrade { .. }));
                    }
                }
            }
        }
        assert_eq!(defined, 6);
        assert!(transition_label(Unreached, Fragile).is_err());
    }

    #[test]
    fn category_order() {
        use PointCategory::*;
        assert!(Fragile < Sensitive && Sensitive < Immunized);
        assert_eq!(Unreached.partial_cmp(&Fragile), None);
        assert_eq!(
            Unreached.partial_cmp(&Unreached),
            Some(std::cmp::Ordering::Equal)
        );
    }

    #[test]
    fn oracle_generic_checks_first() {
        let oracle = AcceptabilityOracle::trace_exact(vec!["a".into()]);
        let r = evaluate_oracle(&obs(ExitKind::Crash, &["a"]), &oracle, None).unwrap();
        assert_eq!(r.reason, VerdictReason::Crash);
        let r = evaluate_oracle(&obs(ExitKind::Hang, &["zzz"]), &oracle, None).unwrap();
        assert_eq!(r.reason, VerdictReason::Freeze);
        let r = evaluate_oracle(&obs(ExitKind::Normal, &["a"]), &oracle, None).unwrap();
        assert!(r.passed());
        let r = evaluate_oracle(&obs(ExitKind::Normal, &["a", "b"]), &oracle, None).unwrap();
        assert_eq!(r.reason, VerdictReason::DomainCheckFailed);
    }

    #[test]
    fn oracle_crash_tolerated_when_normal_exit_not_required() {
        let mut oracle = AcceptabilityOracle::trace_exact(vec!["a".into()]);
        oracle.require_normal_exit = false;
        let r = evaluate_oracle(&obs(ExitKind::Crash, &["a"]), &oracle, None).unwrap();
        assert!(r.passed());
        let r = evaluate_oracle(&obs(ExitKind::Hang, &["a"]), &oracle, None).unwrap();
        assert_eq!(r.reason, VerdictReason::Freeze);
    }

    #[test]
    fn trace_contains_accepts_superset() {
        let oracle = AcceptabilityOracle {
            require_normal_exit: true,
            timeout_ms: 1000,
            domain: DomainCheck::TraceContains {
                expected: vec!["start".into(), "done".into()],
            },
        };
        let r = evaluate_oracle(
            &obs(ExitKind::Normal, &["start", "retry", "done"]),
            &oracle,
            None,
        )
        .unwrap();
        assert!(r.passed());
        let r = evaluate_oracle(&obs(ExitKind::Normal, &["done", "start"]), &oracle, None).unwrap();
        assert_eq!(r.reason, VerdictReason::DomainCheckFailed);
    }

    #[test]
    fn external_command_oracle() {
        let mk = |command: &str| AcceptabilityOracle {
            require_normal_exit: true,
            timeout_ms: 1000,
            domain: DomainCheck::ExternalCommand {
                command: command.into(),
            },
        };
        let o = obs(ExitKind::Normal, &["ok"]);
        assert!(evaluate_oracle(&o, &mk("grep -qx ok"), None)
            .unwrap()
            .passed());
        assert_eq!(
            evaluate_oracle(&o, &mk("grep -qx nope"), None)
                .unwrap()
                .reason,
            VerdictReason::DomainCheckFailed
        );
        assert!(evaluate_oracle(&o, &mk("/definitely/not/here"), None).is_err());
    }

    #[test]
    fn method_names_are_restricted() {
        assert!(MethodRef::new("Class1/exampleMethod").is_ok());
        assert!(MethodRef::new("a.b$c_1").is_ok());
        assert!(MethodRef::new("").is_err());
        assert!(MethodRef::new("has space").is_err());
        assert!(MethodRef::new("semi;colon").is_err());
    }

    #[test]
    fn first_injection_pairs_with_following_catch() {
        let p = PerturbationPoint::new(m("m0"), 0, "IOException");
        let catch = CatchEvent {
            exception: "IOException".into(),
            raiser: m("m0"),
            catcher: m("m2"),
            stack_distance: 2,
            handler_kind: HandlerKind::Manual,
        };
        let o = Observation {
            trace: vec![],
            exit: ExitKind::Normal,
            reach_counts: BTreeMap::new(),
            events: vec![
                MonitorEvent::Inject {
                    point: p.clone(),
                    stack: vec![m("m0"), m("m1"), m("m2")],
                },
                MonitorEvent::Catch(catch.clone()),
            ],
        };
        let (stack, c) = o.first_injection(&p).unwrap();
        assert_eq!(stack.len(), 3);
        assert_eq!(c, Some(&catch));
    }

    fn verdict_strategy() -> impl Strategy<Value = OracleVerdict> {
        prop_oneof![
            Just(OracleVerdict::OK),
            Just(v(VerdictReason::Crash)),
            Just(v(VerdictReason::Freeze)),
            Just(v(VerdictReason::DomainCheckFailed)),
        ]
    }

    proptest! {
        #[test]
        fn budget_is_linear(a in 0u64..1_000_000, b in 0u64..1_000_000,
                            c in 0u64..1_000_000, d in 0u64..1_000_000) {
            prop_assert_eq!(
                experiment_budget(a + c, b + d),
                experiment_budget(a, b) + experiment_budget(c, d)
            );
        }

        #[test]
        fn classify_is_total_and_deterministic(a in verdict_strategy(), b in verdict_strategy()) {
            let x = classify(a, b).unwrap();
            prop_assert_eq!(x, classify(a, b).unwrap());
            prop_assert!(x.category != PointCategory::Unreached);
        }

        #[test]
        fn classification_partitions(cats in proptest::collection::vec(0u8..4, 0..40)) {
            let mut all = BTreeSet::new();
            let mut cl = Classification::default();
            for (i, c) in cats.iter().enumerate() {
                let p = PerturbationPoint::new(m("m"), i as u32, "E");
                let cat = [PointCategory::Fragile, PointCategory::Sensitive,
                           PointCategory::Immunized, PointCategory::Unreached][*c as usize];
                cl.insert(p.clone(), cat);
                all.insert(p);
            }
            prop_assert!(cl.is_partition_of(&all));
            prop_assert_eq!(cl.len(), all.len());
        }
    }
}
