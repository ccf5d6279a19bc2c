//! Random program models for stress campaigns and cross-checking.
//!
//! Call graphs are acyclic (method `i` only calls `j > i`), so every
//! generated program terminates within a small step budget unless it runs
//! into a `hang` statement.

use std::collections::BTreeMap;

use rand::Rng;

use super::{
    CatchClause, CatchPattern, Interpreter, Invocation, MethodBody, ProgramModel, Statement,
    WorkloadSpec,
};
use super::{Exit, FoPlan, InjectionPlan};
use crate::model::MethodRef;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub max_methods: usize,
    /// Upper bound on statements per method, nested ones included.
    pub max_statements: u32,
    pub max_throws: usize,
    pub exception_pool: Vec<String>,
    /// Probability that a catch body contains a `hang`.
    pub hang_rate: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            max_methods: 6,
            max_statements: 4,
            max_throws: 2,
            exception_pool: ["IOException", "ParseException", "StateException"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            hang_rate: 0.1,
        }
    }
}

pub fn method_name(i: usize) -> MethodRef {
    MethodRef::new(format!("m{i}")).expect("generated names are valid")
}

/// A random program and workload; the baseline may crash or hang.
pub fn random_program<R: Rng>(rng: &mut R, params: &SynthParams) -> (ProgramModel, WorkloadSpec) {
    let n = rng.gen_range(1..=params.max_methods.max(1));
    let mut methods = BTreeMap::new();
    let mut token = 0usize;
    for i in 0..n {
        let n_throws = rng.gen_range(0..=params.max_throws.min(params.exception_pool.len()));
        let mut throws: Vec<String> = Vec::new();
        while throws.len() < n_throws {
            let e = pick(rng, &params.exception_pool).clone();
            if !throws.contains(&e) {
                throws.push(e);
            }
        }
        throws.sort();
        let budget = rng.gen_range(1..=params.max_statements.max(1));
        let mut g = Gen {
            rng: &mut *rng,
            params,
            me: i,
            n,
            token: &mut token,
        };
        let statements = g.block(budget, true);
        methods.insert(method_name(i), MethodBody { throws, statements });
    }
    let program =
        ProgramModel::new(method_name(0), methods).expect("generator emits valid programs");
    let mut invocations = vec![Invocation {
        method: method_name(0),
        repeat: rng.gen_range(1..=2),
    }];
    if n > 1 && rng.gen_bool(0.3) {
        invocations.push(Invocation {
            method: method_name(rng.gen_range(1..n)),
            repeat: 1,
        });
    }
    (program, WorkloadSpec { invocations })
}

/// Draws programs until one whose baseline exits normally.
pub fn green_program<R: Rng>(
    rng: &mut R,
    params: &SynthParams,
    step_budget: u64,
) -> (ProgramModel, WorkloadSpec) {
    loop {
        let (p, w) = random_program(rng, params);
        let r = Interpreter::new(&p)
            .execute(&w, &InjectionPlan::none(), &FoPlan::none(), step_budget)
            .expect("generated workloads are valid");
        if r.exit == Exit::Normal {
            return (p, w);
        }
    }
}

fn pick<'a, R: Rng, T>(rng: &mut R, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}

struct Gen<'a, R> {
    rng: &'a mut R,
    params: &'a SynthParams,
    me: usize,
    n: usize,
    token: &'a mut usize,
}

impl<R: Rng> Gen<'_, R> {
    /// Fills up to `budget` statements; `nonempty` forces at least one.
    fn block(&mut self, mut budget: u32, nonempty: bool) -> Vec<Statement> {
        let mut out = Vec::new();
        let mut want = if nonempty { 1 } else { 0 };
        while budget > 0 && (want > 0 || self.rng.gen_bool(0.6)) {
            want = 0;
            let s = self.statement(budget);
            budget -= s.size();
            out.push(s);
        }
        out
    }

    fn emit(&mut self) -> Statement {
        *self.token += 1;
        Statement::Emit(format!("t{}", self.token))
    }

    fn statement(&mut self, budget: u32) -> Statement {
        let can_call = self.me + 1 < self.n;
        loop {
            match self.rng.gen_range(0..10) {
                0..=2 => return self.emit(),
                3..=4 if can_call => {
                    let target = self.rng.gen_range(self.me + 1..self.n);
                    return Statement::Call(method_name(target));
                }
                5 => {
                    let e = pick(self.rng, &self.params.exception_pool).clone();
                    return Statement::Throw(e);
                }
                6..=7 if budget >= 2 => {
                    let inner = budget - 1;
                    let body_budget = self.rng.gen_range(1..=inner);
                    let body = self.block(body_budget, true);
                    let mut left = inner - crate::simprog::block_size(&body);
                    let mut catches = Vec::new();
                    for _ in 0..self.rng.gen_range(1..=2) {
                        let types = if self.rng.gen_bool(0.3) {
                            vec![CatchPattern::Any]
                        } else {
                            vec![CatchPattern::Type(
                                pick(self.rng, &self.params.exception_pool).clone(),
                            )]
                        };
                        let body = if left > 0 && self.rng.gen_bool(self.params.hang_rate) {
                            left -= 1;
                            vec![Statement::Hang]
                        } else {
                            let b = self.block(left, false);
                            left -= crate::simprog::block_size(&b);
                            b
                        };
                        catches.push(CatchClause { types, body });
                    }
                    return Statement::Try { body, catches };
                }
                8 if budget >= 2 => {
                    let count = self.rng.gen_range(1..=3);
                    let body = self.block(budget - 1, true);
                    return Statement::Loop { count, body };
                }
                9 => return self.emit(),
                _ => {}
            }
        }
    }
}
