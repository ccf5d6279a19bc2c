use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{CatchPattern, ProgramError, ProgramModel, Statement, WorkloadSpec, STACK_OVERFLOW};
use crate::model::{
    CatchEvent, ExitKind, FaultModel, HandlerKind, MethodRef, MonitorEvent, Observation,
    PerturbationPoint,
};

/// Default call-depth limit before a call raises [`STACK_OVERFLOW`].
pub const DEFAULT_MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub point: PerturbationPoint,
    pub fault_model: FaultModel,
}

/// At most one active perturbation point per execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub active: Option<Activation>,
}

impl InjectionPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn at(point: PerturbationPoint, fault_model: FaultModel) -> Self {
        Self {
            active: Some(Activation { point, fault_model }),
        }
    }
}

/// Methods whose catch-all wrapper silences instead of re-raising.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoPlan {
    pub active_handlers: BTreeSet<MethodRef>,
}

impl FoPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn single(handler: MethodRef) -> Self {
        Self {
            active_handlers: BTreeSet::from([handler]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exit {
    Normal,
    Crash {
        exception: String,
        /// Stack at the raise site, callee first.
        unwound_stack: Vec<MethodRef>,
    },
    Hang,
}

impl Exit {
    pub fn kind(&self) -> ExitKind {
        match self {
            Exit::Normal => ExitKind::Normal,
            Exit::Crash { .. } => ExitKind::Crash,
            Exit::Hang => ExitKind::Hang,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub trace: Vec<String>,
    pub exit: Exit,
    /// Every perturbation point of the program, reached or not.
    pub reach_counts: BTreeMap<PerturbationPoint, u64>,
    pub events: Vec<MonitorEvent>,
    pub steps_used: u64,
}

impl ExecutionResult {
    pub fn injection_stacks(&self) -> impl Iterator<Item = (&PerturbationPoint, &[MethodRef])> {
        self.events.iter().filter_map(|e| match e {
            MonitorEvent::Inject { point, stack } => Some((point, stack.as_slice())),
            MonitorEvent::Catch(_) => None,
        })
    }

    pub fn catch_events(&self) -> impl Iterator<Item = &CatchEvent> {
        self.events.iter().filter_map(|e| match e {
            MonitorEvent::Catch(c) => Some(c),
            MonitorEvent::Inject { .. } => None,
        })
    }

    pub fn observation(&self) -> Observation {
        Observation {
            trace: self.trace.clone(),
            exit: self.exit.kind(),
            reach_counts: self.reach_counts.clone(),
            events: self.events.clone(),
        }
    }

    pub fn into_observation(self) -> Observation {
        Observation {
            exit: self.exit.kind(),
            trace: self.trace,
            reach_counts: self.reach_counts,
            events: self.events,
        }
    }
}

#[derive(Debug)]
struct Node {
    loc: u32,
    kind: NodeKind,
}

#[derive(Debug)]
enum NodeKind {
    Emit(String),
    Call(usize),
    Throw(String),
    Try {
        body: Vec<Node>,
        catches: Vec<(Vec<CatchPattern>, Vec<Node>)>,
    },
    Loop {
        count: u32,
        body: Vec<Node>,
    },
    Hang,
}

#[derive(Debug)]
struct CompiledMethod {
    name: MethodRef,
    throws: Vec<String>,
    locations: u32,
    body: Vec<Node>,
}

/// A program compiled for repeated execution under different plans.
#[derive(Debug)]
pub struct Interpreter {
    methods: Vec<CompiledMethod>,
    index: HashMap<MethodRef, usize>,
    max_depth: usize,
}

impl Interpreter {
    pub fn new(program: &ProgramModel) -> Self {
        let index: HashMap<MethodRef, usize> = program
            .methods()
            .keys()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let methods = program
            .methods()
            .iter()
            .map(|(name, body)| {
                let mut next = 0;
                CompiledMethod {
                    name: name.clone(),
                    throws: body.throws.clone(),
                    locations: body.location_count(),
                    body: compile_block(&body.statements, &index, &mut next),
                }
            })
            .collect();
        Self {
            methods,
            index,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }

    pub fn with_max_depth(mut self, depth: usize) -> Self {
        self.max_depth = depth.max(1);
        self
    }

    fn method_id(&self, name: &MethodRef, what: &str) -> Result<usize, ProgramError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| ProgramError::invalid(what, format!("undefined method {name}")))
    }

    fn resolve_workload(&self, workload: &WorkloadSpec) -> Result<Vec<(usize, u32)>, ProgramError> {
        workload
            .invocations
            .iter()
            .enumerate()
            .map(|(i, inv)| {
                if inv.repeat == 0 {
                    return Err(ProgramError::invalid(
                        format!("invocations[{i}].repeat"),
                        "repeat must be >= 1",
                    ));
                }
                Ok((self.method_id(&inv.method, "workload")?, inv.repeat))
            })
            .collect()
    }

    /// Runs the workload with all agents attached.
    pub fn execute(
        &self,
        workload: &WorkloadSpec,
        injection: &InjectionPlan,
        fo: &FoPlan,
        step_budget: u64,
    ) -> Result<ExecutionResult, ProgramError> {
        if step_budget == 0 {
            return Err(ProgramError::ZeroStepBudget);
        }
        let calls = self.resolve_workload(workload)?;
        let active = match &injection.active {
            None => None,
            Some(a) => {
                let id = self.method_id(&a.point.method, "injection plan")?;
                let m = &self.methods[id];
                if a.point.location >= m.locations || !m.throws.contains(&a.point.exception) {
                    return Err(ProgramError::invalid(
                        "injection plan",
                        format!("{} is not a perturbation point of the program", a.point),
                    ));
                }
                Some(ActivePoint {
                    method: id,
                    location: a.point.location,
                    fault_model: a.fault_model,
                    point: &a.point,
                })
            }
        };
        let mut fo_on = vec![false; self.methods.len()];
        for h in &fo.active_handlers {
            fo_on[self.method_id(h, "failure-oblivious plan")?] = true;
        }
        let mut run = Run::new(self, true, active, fo_on, step_budget);
        let exit = run.workload(&calls);
        let mut reach_counts = BTreeMap::new();
        for (id, m) in self.methods.iter().enumerate() {
            for loc in 0..m.locations {
                let n = run.reach[id][loc as usize];
                for e in &m.throws {
                    reach_counts.insert(PerturbationPoint::new(m.name.clone(), loc, e.clone()), n);
                }
            }
        }
        Ok(ExecutionResult {
            trace: run.trace,
            exit,
            reach_counts,
            events: run.events,
            steps_used: run.steps,
        })
    }

    /// Runs the workload with no agent logic at all: no reach counting, no
    /// wrappers, no monitoring.
    pub fn execute_uninstrumented(
        &self,
        workload: &WorkloadSpec,
        step_budget: u64,
    ) -> Result<(Vec<String>, ExitKind), ProgramError> {
        if step_budget == 0 {
            return Err(ProgramError::ZeroStepBudget);
        }
        let calls = self.resolve_workload(workload)?;
        let mut run = Run::new(self, false, None, Vec::new(), step_budget);
        let exit = run.workload(&calls);
        Ok((run.trace, exit.kind()))
    }
}

/// One-shot form of [`Interpreter::execute`].
pub fn execute(
    program: &ProgramModel,
    workload: &WorkloadSpec,
    injection: &InjectionPlan,
    fo: &FoPlan,
    step_budget: u64,
) -> Result<ExecutionResult, ProgramError> {
    Interpreter::new(program).execute(workload, injection, fo, step_budget)
}

pub fn execute_uninstrumented(
    program: &ProgramModel,
    workload: &WorkloadSpec,
    step_budget: u64,
) -> Result<(Vec<String>, ExitKind), ProgramError> {
    Interpreter::new(program).execute_uninstrumented(workload, step_budget)
}

fn compile_block(
    block: &[Statement],
    index: &HashMap<MethodRef, usize>,
    next: &mut u32,
) -> Vec<Node> {
    block.iter().map(|s| compile(s, index, next)).collect()
}

fn compile(stmt: &Statement, index: &HashMap<MethodRef, usize>, next: &mut u32) -> Node {
    let loc = *next;
    *next += 1;
    let kind = match stmt {
        Statement::Emit(t) => NodeKind::Emit(t.clone()),
        Statement::Call(m) => NodeKind::Call(index[m]),
        Statement::Throw(e) => NodeKind::Throw(e.clone()),
        Statement::Hang => NodeKind::Hang,
        Statement::Loop { count, body } => NodeKind::Loop {
            count: *count,
            body: compile_block(body, index, next),
        },
        Statement::Try { body, catches } => {
            let body = compile_block(body, index, next);
            let catches = catches
                .iter()
                .map(|c| (c.types.clone(), compile_block(&c.body, index, next)))
                .collect();
            NodeKind::Try { body, catches }
        }
    };
    Node { loc, kind }
}

struct ActivePoint<'a> {
    method: usize,
    location: u32,
    fault_model: FaultModel,
    point: &'a PerturbationPoint,
}

struct Raised {
    exception: String,
    /// Index into the live stack of the frame that raised.
    raiser_depth: usize,
    /// Stack at the raise site, bottom first.
    stack: Vec<usize>,
}

enum Flow {
    Raise(Box<Raised>),
    /// Step budget exhausted; unwinds everything, uncatchable.
    Halt,
}

struct Run<'a> {
    interp: &'a Interpreter,
    instrumented: bool,
    active: Option<ActivePoint<'a>>,
    fo_on: Vec<bool>,
    budget: u64,
    steps: u64,
    stack: Vec<usize>,
    reach: Vec<Vec<u64>>,
    trace: Vec<String>,
    events: Vec<MonitorEvent>,
}

impl<'a> Run<'a> {
    fn new(
        interp: &'a Interpreter,
        instrumented: bool,
        active: Option<ActivePoint<'a>>,
        fo_on: Vec<bool>,
        budget: u64,
    ) -> Self {
        let reach = if instrumented {
            interp
                .methods
                .iter()
                .map(|m| vec![0; m.locations as usize])
                .collect()
        } else {
            Vec::new()
        };
        Self {
            interp,
            instrumented,
            active,
            fo_on,
            budget,
            steps: 0,
            stack: Vec::new(),
            reach,
            trace: Vec::new(),
            events: Vec::new(),
        }
    }

    fn workload(&mut self, calls: &[(usize, u32)]) -> Exit {
        for &(method, repeat) in calls {
            for _ in 0..repeat {
                match self.call(method) {
                    Ok(()) => {}
                    Err(Flow::Halt) => return Exit::Hang,
                    Err(Flow::Raise(r)) => {
                        return Exit::Crash {
                            exception: r.exception,
                            unwound_stack: r
                                .stack
                                .iter()
                                .rev()
                                .map(|&id| self.interp.methods[id].name.clone())
                                .collect(),
                        }
                    }
                }
            }
        }
        Exit::Normal
    }

    fn raise(&self, exception: String) -> Flow {
        Flow::Raise(Box::new(Raised {
            exception,
            raiser_depth: self.stack.len() - 1,
            stack: self.stack.clone(),
        }))
    }

    fn snapshot(&self) -> Vec<MethodRef> {
        self.stack
            .iter()
            .rev()
            .map(|&id| self.interp.methods[id].name.clone())
            .collect()
    }

    fn catch_event(&mut self, r: &Raised, kind: HandlerKind) {
        let catcher_depth = self.stack.len() - 1;
        let methods = &self.interp.methods;
        self.events.push(MonitorEvent::Catch(CatchEvent {
            exception: r.exception.clone(),
            raiser: methods[r.stack[r.raiser_depth]].name.clone(),
            catcher: methods[self.stack[catcher_depth]].name.clone(),
            stack_distance: (r.raiser_depth - catcher_depth) as u32,
            handler_kind: kind,
        }));
    }

    fn call(&mut self, method: usize) -> Result<(), Flow> {
        if self.stack.len() >= self.interp.max_depth {
            return Err(self.raise(STACK_OVERFLOW.to_string()));
        }
        self.stack.push(method);
        let interp = self.interp;
        let mut result = self.block(method, &interp.methods[method].body);
        if let Err(Flow::Raise(r)) = &result {
            if self.instrumented && self.fo_on[method] {
                self.catch_event(r, HandlerKind::FoWrapper);
                result = Ok(());
            }
        }
        self.stack.pop();
        result
    }

    fn block(&mut self, method: usize, nodes: &[Node]) -> Result<(), Flow> {
        for node in nodes {
            self.node(method, node)?;
        }
        Ok(())
    }

    fn node(&mut self, method: usize, node: &Node) -> Result<(), Flow> {
        if self.steps >= self.budget {
            return Err(Flow::Halt);
        }
        self.steps += 1;
        if self.instrumented {
            let count = &mut self.reach[method][node.loc as usize];
            *count += 1;
            let count = *count;
            if let Some(a) = &self.active {
                if a.method == method
                    && a.location == node.loc
                    && (a.fault_model == FaultModel::Always || count == 1)
                {
                    let point = a.point.clone();
                    self.events.push(MonitorEvent::Inject {
                        point,
                        stack: self.snapshot(),
                    });
                    return Err(self.raise(a.point.exception.clone()));
                }
            }
        }
        match &node.kind {
            NodeKind::Emit(t) => {
                self.trace.push(t.clone());
                Ok(())
            }
            NodeKind::Call(target) => self.call(*target),
            NodeKind::Throw(e) => Err(self.raise(e.clone())),
            NodeKind::Hang => {
                self.steps = self.budget;
                Err(Flow::Halt)
            }
            NodeKind::Loop { count, body } => {
                for _ in 0..*count {
                    self.block(method, body)?;
                }
                Ok(())
            }
            NodeKind::Try { body, catches } => match self.block(method, body) {
                Err(Flow::Raise(r)) => {
                    let handler = catches
                        .iter()
                        .find(|(types, _)| types.iter().any(|t| t.matches(&r.exception)));
                    match handler {
                        Some((_, handler_body)) => {
                            if self.instrumented {
                                self.catch_event(&r, HandlerKind::Manual);
                            }
                            self.block(method, handler_body)
                        }
                        None => Err(Flow::Raise(r)),
                    }
                }
                other => other,
            },
        }
    }
}
