//! Campaign orchestration: detection, classification, candidate discovery
//! and candidate assessment, one experiment at a time (or in parallel on
//! stateless targets), with every result journaled before the next starts.

pub mod journal;
pub mod target;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    binding_status, classify, evaluate_oracle, AcceptabilityOracle, BindingStatus,
    CandidateBinding, Classification, DomainCheck, ExitKind, FaultModel, HandlerKind, MethodRef,
    Observation, OracleVerdict, PerturbationPoint, PointCategory, VerdictReason,
};
use crate::protocol::ActivationFile;
use crate::simprog::{FoPlan, InjectionPlan};

pub use journal::{ExperimentRecord, Journal, JournalError};
pub use target::{ExternalTarget, Health, SimulatorTarget, Target, TargetError};

/// Default per-execution wall-clock timeout for external targets.
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;
pub const DEFAULT_STEP_BUDGET: u64 = 100_000;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("workload not green: the reference execution failed the oracle ({0:?})")]
    WorkloadNotGreen(VerdictReason),
    #[error("target is unrecoverable: health check still failing after restart")]
    Unrecoverable,
    #[error("experiment {id} could not run: {reason}")]
    ExperimentNotRun { id: u64, reason: String },
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Purpose {
    /// Reference execution with nothing active.
    Baseline,
    Classify,
    /// First-hit rerun used only when no classification stack is available.
    Discover,
    Assess,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: u64,
    pub purpose: Purpose,
    pub point: Option<PerturbationPoint>,
    pub fault_model: FaultModel,
    pub fo_handler: Option<MethodRef>,
}

/// Identity of an experiment independent of its id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExperimentKey {
    pub purpose: Purpose,
    pub point: Option<PerturbationPoint>,
    pub fault_model: FaultModel,
    pub fo_handler: Option<MethodRef>,
}

impl ExperimentKey {
    pub fn baseline() -> Self {
        Self {
            purpose: Purpose::Baseline,
            point: None,
            fault_model: FaultModel::FirstHit,
            fo_handler: None,
        }
    }

    pub fn new(purpose: Purpose, point: &PerturbationPoint, fault_model: FaultModel) -> Self {
        Self {
            purpose,
            point: Some(point.clone()),
            fault_model,
            fo_handler: None,
        }
    }

    pub fn assess(binding: &CandidateBinding, fault_model: FaultModel) -> Self {
        Self {
            purpose: Purpose::Assess,
            point: Some(binding.point.clone()),
            fault_model,
            fo_handler: Some(binding.handler.clone()),
        }
    }

    fn validate(&self) -> Result<(), CampaignError> {
        let ok = match self.purpose {
            Purpose::Baseline => self.point.is_none() && self.fo_handler.is_none(),
            Purpose::Classify | Purpose::Discover => {
                self.point.is_some() && self.fo_handler.is_none()
            }
            Purpose::Assess => self.point.is_some() && self.fo_handler.is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(CampaignError::InvalidSpec(format!("{self:?}")))
        }
    }

    fn with_id(self, id: u64) -> ExperimentSpec {
        ExperimentSpec {
            id,
            purpose: self.purpose,
            point: self.point,
            fault_model: self.fault_model,
            fo_handler: self.fo_handler,
        }
    }
}

impl ExperimentSpec {
    pub fn key(&self) -> ExperimentKey {
        ExperimentKey {
            purpose: self.purpose,
            point: self.point.clone(),
            fault_model: self.fault_model,
            fo_handler: self.fo_handler.clone(),
        }
    }

    fn activation(&self, step_budget: u64, timeout_ms: u64) -> ActivationFile {
        ActivationFile {
            injection: match &self.point {
                Some(p) => InjectionPlan::at(p.clone(), self.fault_model),
                None => InjectionPlan::none(),
            },
            fo: match &self.fo_handler {
                Some(h) => FoPlan::single(h.clone()),
                None => FoPlan::none(),
            },
            step_budget,
            timeout_ms,
        }
    }
}

/// Where the acceptability oracle comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleSource {
    Fixed(AcceptabilityOracle),
    /// Domain check against the baseline's own trace, exact or as a
    /// subsequence, resolved once the baseline has run.
    BaselineTrace {
        require_normal_exit: bool,
        timeout_ms: u64,
        contains: bool,
    },
}

impl OracleSource {
    pub fn baseline_exact() -> Self {
        OracleSource::BaselineTrace {
            require_normal_exit: true,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            contains: false,
        }
    }

    pub fn timeout_ms(&self) -> u64 {
        match self {
            OracleSource::Fixed(o) => o.timeout_ms,
            OracleSource::BaselineTrace { timeout_ms, .. } => *timeout_ms,
        }
    }

    pub fn set_timeout_ms(&mut self, ms: u64) {
        match self {
            OracleSource::Fixed(o) => o.timeout_ms = ms,
            OracleSource::BaselineTrace { timeout_ms, .. } => *timeout_ms = ms,
        }
    }

    fn resolve(&self, baseline: &Observation) -> AcceptabilityOracle {
        match self {
            OracleSource::Fixed(o) => o.clone(),
            OracleSource::BaselineTrace {
                require_normal_exit,
                timeout_ms,
                contains,
            } => {
                let expected = baseline.trace.clone();
                AcceptabilityOracle {
                    require_normal_exit: *require_normal_exit,
                    timeout_ms: *timeout_ms,
                    domain: if *contains {
                        DomainCheck::TraceContains { expected }
                    } else {
                        DomainCheck::TraceExact { expected }
                    },
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub oracle: OracleSource,
    /// Method-name prefix; empty selects every method.
    pub filter: String,
    pub step_budget: u64,
    /// Worker count; values above 1 only apply to stateless targets.
    pub parallelism: usize,
    /// Root for per-experiment directories (`<root>/<id>/`).
    pub experiment_root: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            oracle: OracleSource::baseline_exact(),
            filter: String::new(),
            step_budget: DEFAULT_STEP_BUDGET,
            parallelism: 1,
            experiment_root: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    /// `None` when the binding was excluded before both runs completed.
    pub achieved: Option<PointCategory>,
    pub status: Option<BindingStatus>,
    pub anomaly: bool,
    /// The target needed a restart after one of the binding's runs.
    pub corrupted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedBinding {
    pub binding: CandidateBinding,
    pub achieved: PointCategory,
    pub status: BindingStatus,
}

impl Ord for ValidatedBinding {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.binding, self.achieved.sort_key(), self.status as u8).cmp(&(
            &other.binding,
            other.achieved.sort_key(),
            other.status as u8,
        ))
    }
}

impl PartialOrd for ValidatedBinding {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum Stage {
    #[default]
    Fresh,
    Detected,
    Classified,
    Discovered,
    Assessed,
}

#[derive(Debug, Clone, Default)]
pub struct CampaignState {
    pub stage: Stage,
    pub baseline_trace: Vec<String>,
    pub points: BTreeSet<PerturbationPoint>,
    pub reach_counts: BTreeMap<PerturbationPoint, u64>,
    pub classification: Classification,
    /// Points whose verdicts were (fail once, pass always).
    pub anomalies: BTreeSet<PerturbationPoint>,
    /// Manual handler that caught the first injected exception; `None`
    /// when it escaped the workload.
    pub default_handlers: BTreeMap<PerturbationPoint, Option<MethodRef>>,
    pub candidates: BTreeSet<CandidateBinding>,
    pub assessments: BTreeMap<CandidateBinding, Assessment>,
    pub validated: BTreeSet<ValidatedBinding>,
    /// Points with a binding whose experiment left the target corrupted.
    pub flagged: BTreeSet<PerturbationPoint>,
    /// Workload executions backing this state, replayed ones included.
    pub experiments: u64,
    /// Discovery reruns (first-hit stacks not available from classification).
    pub discovery_reruns: u64,
    pub warnings: Vec<String>,
}

impl CampaignState {
    pub fn reached_points(&self) -> impl Iterator<Item = &PerturbationPoint> {
        self.points
            .iter()
            .filter(|p| !self.classification.unreached.contains(*p))
    }

    pub fn original_category(&self, point: &PerturbationPoint) -> Option<PointCategory> {
        self.classification.category_of(point)
    }

    /// Original category raised by the best validated binding.
    pub fn best_achieved(&self, point: &PerturbationPoint) -> Option<PointCategory> {
        let original = self.original_category(point)?;
        if original == PointCategory::Unreached {
            return Some(original);
        }
        Some(
            self.validated
                .iter()
                .filter(|v| &v.binding.point == point)
                .map(|v| v.achieved)
                .fold(
                    original,
                    |best, a| if a.rank() > best.rank() { a } else { best },
                ),
        )
    }

    pub fn candidate_counts(&self) -> BTreeMap<&PerturbationPoint, usize> {
        let mut counts: BTreeMap<&PerturbationPoint, usize> =
            self.points.iter().map(|p| (p, 0)).collect();
        for c in &self.candidates {
            *counts.entry(&c.point).or_default() += 1;
        }
        counts
    }
}

/// Candidate handlers for `point` from a first-hit observation: every
/// distinct method from the thrower up to, not including, the frame whose
/// handler caught the exception (all frames when nothing caught it).
/// Returns `None` when the point was never injected.
pub fn candidates_from(
    observation: &Observation,
    point: &PerturbationPoint,
) -> Option<(BTreeSet<MethodRef>, Option<MethodRef>)> {
    let (stack, catch) = observation.first_injection(point)?;
    let (frames, handler) = match catch {
        Some(c) => {
            let d = (c.stack_distance as usize).min(stack.len());
            let handler = (c.handler_kind == HandlerKind::Manual).then(|| c.catcher.clone());
            (&stack[..d], handler)
        }
        None => (stack, None),
    };
    Some((frames.iter().cloned().collect(), handler))
}

pub struct Campaign<'t> {
    target: &'t dyn Target,
    config: CampaignConfig,
    journal: Journal,
    oracle: Option<AcceptabilityOracle>,
    state: CampaignState,
    next_id: u64,
    executed: u64,
}

impl<'t> Campaign<'t> {
    pub fn new(target: &'t dyn Target, config: CampaignConfig, journal: Journal) -> Self {
        let next_id = journal.next_id();
        Self {
            target,
            config,
            journal,
            oracle: None,
            state: CampaignState::default(),
            next_id,
            executed: 0,
        }
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn into_state(self) -> CampaignState {
        self.state
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    /// Workload executions actually performed by this process.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    /// The resolved oracle, once the baseline has run.
    pub fn oracle(&self) -> Option<&AcceptabilityOracle> {
        self.oracle.as_ref()
    }

    fn warn(&mut self, msg: String) {
        self.state.warnings.push(msg);
    }

    fn timeout_ms(&self) -> u64 {
        self.config.oracle.timeout_ms()
    }

    fn parallel(&self) -> bool {
        self.config.parallelism > 1 && self.target.supports_parallel()
    }

    fn allocate(&mut self, key: ExperimentKey) -> ExperimentSpec {
        let id = self.next_id;
        self.next_id += 1;
        key.with_id(id)
    }

    /// Runs the workload and judges it; no health check, no persistence.
    fn execute(
        target: &dyn Target,
        spec: &ExperimentSpec,
        oracle: Option<&AcceptabilityOracle>,
        source: &OracleSource,
        step_budget: u64,
        root: Option<&PathBuf>,
    ) -> Result<(ExperimentRecord, Option<AcceptabilityOracle>), CampaignError> {
        let activation = spec.activation(step_budget, source.timeout_ms());
        let dir = root.map(|r| r.join(spec.id.to_string()));
        let start = Instant::now();
        let observation = target.run(&activation, dir.as_deref()).map_err(|e| {
            CampaignError::ExperimentNotRun {
                id: spec.id,
                reason: e.to_string(),
            }
        })?;
        let wall_ms = start.elapsed().as_millis() as u64;
        let resolved = match oracle {
            Some(o) => o.clone(),
            None => source.resolve(&observation),
        };
        let verdict = evaluate_oracle(&observation, &resolved, target.work_dir()).map_err(|e| {
            CampaignError::ExperimentNotRun {
                id: spec.id,
                reason: e.to_string(),
            }
        })?;
        let record = ExperimentRecord {
            journal_version: journal::JOURNAL_VERSION,
            spec: spec.clone(),
            observation: observation.into(),
            verdict,
            wall_ms,
            health: Health::Healthy,
        };
        Ok((record, oracle.is_none().then_some(resolved)))
    }

    /// Replays `key` from the journal or runs it, health-checks the target
    /// and persists the record.
    fn run_one(&mut self, key: ExperimentKey) -> Result<ExperimentRecord, CampaignError> {
        key.validate()?;
        if let Some(rec) = self.journal.get(&key) {
            let rec = rec.clone();
            self.state.experiments += 1;
            if self.oracle.is_none() {
                self.oracle = Some(self.config.oracle.resolve(&rec.observation.clone().into()));
            }
            return Ok(rec);
        }
        let spec = self.allocate(key);
        let (mut rec, resolved) = match Self::execute(
            self.target,
            &spec,
            self.oracle.as_ref(),
            &self.config.oracle,
            self.config.step_budget,
            self.config.experiment_root.as_ref(),
        ) {
            Ok(x) => x,
            Err(e) => {
                self.warn(e.to_string());
                return Err(e);
            }
        };
        if resolved.is_some() {
            self.oracle = resolved;
        }
        rec.health = self.target.health_check_and_restart()?;
        self.journal.append(rec.clone())?;
        self.executed += 1;
        self.state.experiments += 1;
        if rec.health == Health::Unrecoverable {
            return Err(CampaignError::Unrecoverable);
        }
        Ok(rec)
    }

    /// Runs a batch of independent experiments, in parallel when allowed.
    fn run_batch(
        &mut self,
        keys: Vec<ExperimentKey>,
    ) -> Result<Vec<ExperimentRecord>, CampaignError> {
        if !self.parallel() {
            return keys.into_iter().map(|k| self.run_one(k)).collect();
        }
        for k in &keys {
            k.validate()?;
        }
        let mut slots: Vec<Result<ExperimentRecord, ExperimentSpec>> =
            Vec::with_capacity(keys.len());
        for k in keys {
            match self.journal.get(&k) {
                Some(rec) => slots.push(Ok(rec.clone())),
                None => {
                    let spec = self.allocate(k);
                    slots.push(Err(spec));
                }
            }
        }
        let oracle = self.oracle.clone().expect("batches run after the baseline");
        let journal = Mutex::new(std::mem::replace(&mut self.journal, Journal::in_memory()));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
            .map_err(|e| TargetError::Io(format!("thread pool: {e}")))?;
        let target = self.target;
        let source = &self.config.oracle;
        let step_budget = self.config.step_budget;
        let root = self.config.experiment_root.as_ref();
        let outcomes: Vec<Result<(ExperimentRecord, bool), CampaignError>> = pool.install(|| {
            use rayon::prelude::*;
            slots
                .into_par_iter()
                .map(|slot| match slot {
                    Ok(rec) => Ok((rec, false)),
                    Err(spec) => {
                        let (mut rec, _) =
                            Self::execute(target, &spec, Some(&oracle), source, step_budget, root)?;
                        rec.health = target.health_check_and_restart()?;
                        journal
                            .lock()
                            .expect("journal writer poisoned")
                            .append(rec.clone())?;
                        Ok((rec, true))
                    }
                })
                .collect()
        });
        self.journal = journal.into_inner().expect("journal writer poisoned");
        let mut out = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            match o {
                Ok((rec, fresh)) => {
                    self.executed += u64::from(fresh);
                    self.state.experiments += 1;
                    if rec.health == Health::Unrecoverable {
                        return Err(CampaignError::Unrecoverable);
                    }
                    out.push(rec);
                }
                Err(e) => {
                    self.warn(e.to_string());
                    return Err(e);
                }
            }
        }
        Ok(out)
    }

    fn ensure_healthy(&mut self) -> Result<(), CampaignError> {
        match self.target.health_check_and_restart()? {
            Health::Unrecoverable => Err(CampaignError::Unrecoverable),
            Health::Restarted => {
                self.warn("target needed a restart before the campaign".into());
                Ok(())
            }
            Health::Healthy => Ok(()),
        }
    }

    /// Baseline execution and point enumeration. Points the workload never
    /// reaches are marked unreached.
    pub fn detect(&mut self) -> Result<&BTreeSet<PerturbationPoint>, CampaignError> {
        if self.state.stage >= Stage::Detected {
            return Ok(&self.state.points);
        }
        self.ensure_healthy()?;
        let rec = self.run_one(ExperimentKey::baseline())?;
        if !rec.verdict.passed() {
            return Err(CampaignError::WorkloadNotGreen(rec.verdict.reason));
        }
        let obs: Observation = rec.observation.into();
        self.state.baseline_trace = obs.trace.clone();
        for (p, n) in obs.reach_counts {
            if !p.method.as_str().starts_with(&self.config.filter) {
                continue;
            }
            if n == 0 {
                self.state.classification.unreached.insert(p.clone());
            }
            self.state.reach_counts.insert(p.clone(), n);
            self.state.points.insert(p);
        }
        self.state.stage = Stage::Detected;
        Ok(&self.state.points)
    }

    /// Two experiments per reached point, first-hit then always.
    pub fn classify(&mut self) -> Result<&Classification, CampaignError> {
        if self.state.stage >= Stage::Classified {
            return Ok(&self.state.classification);
        }
        self.detect()?;
        let reached: Vec<PerturbationPoint> = self.state.reached_points().cloned().collect();
        let keys = reached
            .iter()
            .flat_map(|p| FaultModel::ALL.map(|fm| ExperimentKey::new(Purpose::Classify, p, fm)))
            .collect();
        let records = self.run_batch(keys)?;
        for (p, pair) in reached.iter().zip(records.chunks(2)) {
            let c = classify(pair[0].verdict, pair[1].verdict)
                .expect("executed experiments always carry a verdict");
            if c.anomaly {
                self.state.anomalies.insert(p.clone());
            }
            self.state.classification.insert(p.clone(), c.category);
        }
        self.state.stage = Stage::Classified;
        Ok(&self.state.classification)
    }

    /// Candidate handlers from first-hit injection stacks, reusing the
    /// classification runs.
    pub fn discover(&mut self) -> Result<&BTreeSet<CandidateBinding>, CampaignError> {
        if self.state.stage >= Stage::Discovered {
            return Ok(&self.state.candidates);
        }
        self.classify()?;
        let reached: Vec<PerturbationPoint> = self.state.reached_points().cloned().collect();
        let mut stacks: Vec<Option<Observation>> = Vec::with_capacity(reached.len());
        let mut rerun = Vec::new();
        for (i, p) in reached.iter().enumerate() {
            let reuse = self
                .journal
                .get(&ExperimentKey::new(
                    Purpose::Classify,
                    p,
                    FaultModel::FirstHit,
                ))
                .map(|r| Observation::from(r.observation.clone()))
                .filter(|o| o.first_injection(p).is_some());
            if reuse.is_none() {
                rerun.push((
                    i,
                    ExperimentKey::new(Purpose::Discover, p, FaultModel::FirstHit),
                ));
            }
            stacks.push(reuse);
        }
        let (slots, keys): (Vec<usize>, Vec<ExperimentKey>) = rerun.into_iter().unzip();
        self.state.discovery_reruns += keys.len() as u64;
        for (i, rec) in slots.into_iter().zip(self.run_batch(keys)?) {
            stacks[i] = Some(rec.observation.into());
        }
        for (p, obs) in reached.iter().zip(stacks) {
            match obs.as_ref().and_then(|o| candidates_from(o, p)) {
                Some((methods, handler)) => {
                    self.state.default_handlers.insert(p.clone(), handler);
                    for m in methods {
                        self.state.candidates.insert(CandidateBinding {
                            point: p.clone(),
                            handler: m,
                        });
                    }
                }
                None => self.warn(format!(
                    "{p} was reached in the baseline but never injected"
                )),
            }
        }
        self.state.stage = Stage::Discovered;
        Ok(&self.state.candidates)
    }

    /// Two experiments per candidate with its wrapper activated.
    pub fn assess(&mut self) -> Result<&BTreeSet<ValidatedBinding>, CampaignError> {
        if self.state.stage >= Stage::Assessed {
            return Ok(&self.state.validated);
        }
        self.discover()?;
        let bindings: Vec<CandidateBinding> = self.state.candidates.iter().cloned().collect();
        if self.parallel() {
            let keys = bindings
                .iter()
                .flat_map(|b| FaultModel::ALL.map(|fm| ExperimentKey::assess(b, fm)))
                .collect();
            let records = self.run_batch(keys)?;
            for (b, pair) in bindings.iter().zip(records.chunks(2)) {
                self.record_assessment(b, Some(&pair[0]), Some(&pair[1]));
            }
        } else {
            for b in &bindings {
                let once = self.run_one(ExperimentKey::assess(b, FaultModel::FirstHit))?;
                let always = if once.corrupted_target() {
                    None
                } else {
                    Some(self.run_one(ExperimentKey::assess(b, FaultModel::Always))?)
                };
                self.record_assessment(b, Some(&once), always.as_ref());
            }
        }
        self.state.stage = Stage::Assessed;
        Ok(&self.state.validated)
    }

    fn record_assessment(
        &mut self,
        binding: &CandidateBinding,
        once: Option<&ExperimentRecord>,
        always: Option<&ExperimentRecord>,
    ) {
        let corrupted = once.is_some_and(ExperimentRecord::corrupted_target)
            || always.is_some_and(ExperimentRecord::corrupted_target);
        if corrupted {
            self.state.flagged.insert(binding.point.clone());
            self.warn(format!(
                "{} -> {} left the target corrupted; excluded",
                binding.point, binding.handler
            ));
            self.state.assessments.insert(
                binding.clone(),
                Assessment {
                    achieved: None,
                    status: None,
                    anomaly: false,
                    corrupted: true,
                },
            );
            return;
        }
        let (once, always) = (once.expect("run"), always.expect("run"));
        let c = classify(once.verdict, always.verdict)
            .expect("executed experiments always carry a verdict");
        let original = self
            .state
            .original_category(&binding.point)
            .expect("candidates come from classified points");
        let status = binding_status(original, c.category).expect("both categories are ranked");
        self.state.assessments.insert(
            binding.clone(),
            Assessment {
                achieved: Some(c.category),
                status: Some(status),
                anomaly: c.anomaly,
                corrupted: false,
            },
        );
        if status != BindingStatus::NoEffect {
            self.state.validated.insert(ValidatedBinding {
                binding: binding.clone(),
                achieved: c.category,
                status,
            });
        }
    }

    /// Full pipeline.
    pub fn run(&mut self) -> Result<&CampaignState, CampaignError> {
        self.assess()?;
        Ok(&self.state)
    }

    /// Mean wall-clock time of uninstrumented runs and of instrumented runs
    /// with nothing active, over `runs` alternating pairs.
    pub fn measure_overhead(&self, runs: usize) -> Result<Overhead, CampaignError> {
        let activation = ActivationFile {
            injection: InjectionPlan::none(),
            fo: FoPlan::none(),
            step_budget: self.config.step_budget,
            timeout_ms: self.timeout_ms(),
        };
        let runs = runs.max(1);
        let (mut plain, mut instrumented) = (0f64, 0f64);
        for _ in 0..runs {
            let t = Instant::now();
            self.target.run_uninstrumented(&activation)?;
            plain += t.elapsed().as_secs_f64() * 1e3;
            let t = Instant::now();
            let obs = self.target.run(&activation, None)?;
            instrumented += t.elapsed().as_secs_f64() * 1e3;
            debug_assert!(obs.exit != ExitKind::Hang || self.config.step_budget > 0);
        }
        Ok(Overhead {
            runs,
            baseline_ms: plain / runs as f64,
            instrumented_ms: instrumented / runs as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overhead {
    pub runs: usize,
    pub baseline_ms: f64,
    pub instrumented_ms: f64,
}

/// Verdict pair for a point or binding, as recorded in the journal.
pub fn recorded_verdicts(
    journal: &Journal,
    purpose: Purpose,
    point: &PerturbationPoint,
    handler: Option<&MethodRef>,
) -> Option<(OracleVerdict, OracleVerdict)> {
    let get = |fm| {
        journal
            .get(&ExperimentKey {
                purpose,
                point: Some(point.clone()),
                fault_model: fm,
                fo_handler: handler.cloned(),
            })
            .map(|r| r.verdict)
    };
    Some((get(FaultModel::FirstHit)?, get(FaultModel::Always)?))
}
