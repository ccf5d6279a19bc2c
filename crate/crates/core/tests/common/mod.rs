//! Reference implementations used as oracles: a direct AST-walking
//! interpreter and an exhaustive campaign built on top of it. Neither shares
//! code with the crate's interpreter or controller.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use oblivion_core::model::{BindingStatus, MethodRef, PointCategory};
use oblivion_core::simprog::{CatchPattern, ProgramModel, Statement, WorkloadSpec};

pub type Point = (String, u32, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefExit {
    Normal,
    Crash,
    Hang,
}

#[derive(Debug, Clone, Default)]
pub struct Plan {
    pub point: Option<Point>,
    pub always: bool,
    pub fo: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RefRun {
    pub trace: Vec<String>,
    pub exit: RefExit,
    /// Keyed by (method, location); only filled when instrumented.
    pub reach: BTreeMap<(String, u32), u64>,
    pub injections: u64,
    /// Bottom-first stack at the first injection.
    pub first_stack: Option<Vec<String>>,
    /// Stack index of the frame whose manual handler caught the first
    /// injected exception.
    pub first_catcher: Option<usize>,
}

enum Unwind {
    Exc { ty: String, first_injected: bool },
    Halt,
}

struct Machine<'a> {
    program: &'a ProgramModel,
    instrumented: bool,
    plan: &'a Plan,
    budget: u64,
    steps: u64,
    frames: Vec<String>,
    out: RefRun,
}

pub fn size(s: &Statement) -> u32 {
    match s {
        Statement::Loop { body, .. } => 1 + body.iter().map(size).sum::<u32>(),
        Statement::Try { body, catches } => {
            1 + body.iter().map(size).sum::<u32>()
                + catches
                    .iter()
                    .map(|c| c.body.iter().map(size).sum::<u32>())
                    .sum::<u32>()
        }
        _ => 1,
    }
}

fn covers(patterns: &[CatchPattern], ty: &str) -> bool {
    patterns.iter().any(|p| match p {
        CatchPattern::Any => true,
        CatchPattern::Type(t) => t == ty,
    })
}

impl Machine<'_> {
    fn invoke(&mut self, method: &str) -> Result<(), Unwind> {
        if self.frames.len() >= 256 {
            return Err(Unwind::Exc {
                ty: "StackOverflowError".into(),
                first_injected: false,
            });
        }
        self.frames.push(method.to_string());
        let key = MethodRef::new(method).expect("method names are valid");
        let body = &self.program.methods()[&key].statements;
        let mut r = self.seq(method, body, 0);
        if self.instrumented && self.plan.fo.as_deref() == Some(method) {
            if let Err(Unwind::Exc { .. }) = r {
                r = Ok(());
            }
        }
        self.frames.pop();
        r
    }

    fn seq(&mut self, method: &str, stmts: &[Statement], start: u32) -> Result<(), Unwind> {
        let mut loc = start;
        for s in stmts {
            self.stmt(method, s, loc)?;
            loc += size(s);
        }
        Ok(())
    }

    fn stmt(&mut self, method: &str, s: &Statement, loc: u32) -> Result<(), Unwind> {
        if self.steps >= self.budget {
            return Err(Unwind::Halt);
        }
        self.steps += 1;
        if self.instrumented {
            let n = self.out.reach.entry((method.to_string(), loc)).or_insert(0);
            *n += 1;
            let n = *n;
            if let Some((pm, pl, pe)) = &self.plan.point {
                if pm == method && *pl == loc && (self.plan.always || n == 1) {
                    self.out.injections += 1;
                    let first = self.out.first_stack.is_none();
                    if first {
                        self.out.first_stack = Some(self.frames.clone());
                    }
                    return Err(Unwind::Exc {
                        ty: pe.clone(),
                        first_injected: first,
                    });
                }
            }
        }
        match s {
            Statement::Emit(t) => {
                self.out.trace.push(t.clone());
                Ok(())
            }
            Statement::Call(m) => self.invoke(m.as_str()),
            Statement::Throw(e) => Err(Unwind::Exc {
                ty: e.clone(),
                first_injected: false,
            }),
            Statement::Hang => Err(Unwind::Halt),
            Statement::Loop { count, body } => {
                for _ in 0..*count {
                    self.seq(method, body, loc + 1)?;
                }
                Ok(())
            }
            Statement::Try { body, catches } => {
                let err = match self.seq(method, body, loc + 1) {
                    Err(Unwind::Exc { ty, first_injected }) => (ty, first_injected),
                    other => return other,
                };
                let mut start = loc + 1 + body.iter().map(size).sum::<u32>();
                for c in catches {
                    if covers(&c.types, &err.0) {
                        if self.instrumented && err.1 {
                            self.out.first_catcher = Some(self.frames.len() - 1);
                        }
                        return self.seq(method, &c.body, start);
                    }
                    start += c.body.iter().map(size).sum::<u32>();
                }
                Err(Unwind::Exc {
                    ty: err.0,
                    first_injected: err.1,
                })
            }
        }
    }
}

pub fn run(
    program: &ProgramModel,
    workload: &WorkloadSpec,
    plan: &Plan,
    instrumented: bool,
    budget: u64,
) -> RefRun {
    let mut m = Machine {
        program,
        instrumented,
        plan,
        budget,
        steps: 0,
        frames: Vec::new(),
        out: RefRun {
            trace: Vec::new(),
            exit: RefExit::Normal,
            reach: BTreeMap::new(),
            injections: 0,
            first_stack: None,
            first_catcher: None,
        },
    };
    'outer: for inv in &workload.invocations {
        for _ in 0..inv.repeat {
            match m.invoke(inv.method.as_str()) {
                Ok(()) => {}
                Err(Unwind::Halt) => {
                    m.out.exit = RefExit::Hang;
                    break 'outer;
                }
                Err(Unwind::Exc { .. }) => {
                    m.out.exit = RefExit::Crash;
                    break 'outer;
                }
            }
        }
    }
    m.out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefOracle {
    /// Normal exit and the baseline trace, token for token.
    ExactBaseline,
    /// Normal exit only.
    NormalExit,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct BruteForce {
    pub categories: BTreeMap<Point, PointCategory>,
    pub candidates: BTreeSet<(Point, String)>,
    /// (point, handler, achieved rank, status)
    pub validated: BTreeSet<(Point, String, u8, String)>,
    pub executions: u64,
}

fn category(once: bool, always: bool) -> PointCategory {
    match (once, always) {
        (true, true) => PointCategory::Immunized,
        (true, false) => PointCategory::Sensitive,
        _ => PointCategory::Fragile,
    }
}

pub fn rank(c: PointCategory) -> u8 {
    match c {
        PointCategory::Fragile => 0,
        PointCategory::Sensitive => 1,
        PointCategory::Immunized => 2,
        PointCategory::Unreached => 9,
    }
}

/// Runs every (point, fault model) and every (point, fault model, stack
/// candidate) combination directly.
pub fn brute_force(
    program: &ProgramModel,
    workload: &WorkloadSpec,
    oracle: RefOracle,
    budget: u64,
) -> BruteForce {
    let mut bf = BruteForce::default();
    let baseline = run(program, workload, &Plan::default(), true, budget);
    bf.executions += 1;
    let accept = |r: &RefRun| {
        r.exit == RefExit::Normal && (oracle == RefOracle::NormalExit || r.trace == baseline.trace)
    };
    assert!(
        accept(&baseline),
        "corpus programs must have green baselines"
    );

    for (name, body) in program.methods() {
        let n_locs: u32 = body.statements.iter().map(size).sum();
        for loc in 0..n_locs {
            for exc in &body.throws {
                let point: Point = (name.to_string(), loc, exc.clone());
                if baseline
                    .reach
                    .get(&(name.to_string(), loc))
                    .copied()
                    .unwrap_or(0)
                    == 0
                {
                    bf.categories.insert(point, PointCategory::Unreached);
                    continue;
                }
                let once_plan = Plan {
                    point: Some(point.clone()),
                    always: false,
                    fo: None,
                };
                let always_plan = Plan {
                    always: true,
                    ..once_plan.clone()
                };
                let once = run(program, workload, &once_plan, true, budget);
                let always = run(program, workload, &always_plan, true, budget);
                bf.executions += 2;
                let original = category(accept(&once), accept(&always));
                bf.categories.insert(point.clone(), original);

                let Some(stack) = &once.first_stack else {
                    continue;
                };
                let lowest = once.first_catcher.map_or(0, |c| c + 1);
                let handlers: BTreeSet<String> = stack[lowest..].iter().cloned().collect();
                for h in handlers {
                    bf.candidates.insert((point.clone(), h.clone()));
                    let with = |p: &Plan| Plan {
                        fo: Some(h.clone()),
                        ..p.clone()
                    };
                    let a = run(program, workload, &with(&once_plan), true, budget);
                    let b = run(program, workload, &with(&always_plan), true, budget);
                    bf.executions += 2;
                    let achieved = category(accept(&a), accept(&b));
                    let status = if rank(achieved) > rank(original) {
                        BindingStatus::ValidatedImprovement
                    } else if achieved == original && original != PointCategory::Fragile {
                        BindingStatus::AlternativeResilient
                    } else {
                        continue;
                    };
                    bf.validated
                        .insert((point.clone(), h, rank(achieved), format!("{status:?}")));
                }
            }
        }
    }
    bf
}
