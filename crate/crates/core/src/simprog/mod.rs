//! Deterministic program models used as the built-in campaign target.
//!
//! A program is a set of methods whose bodies are small statement trees.
//! The interpreter in [`interp`] carries the three agents: it counts
//! reaches, injects exceptions at an active point and wraps every method
//! in a catch-all that re-raises unless activated.

mod interp;
mod parse;
pub mod synth;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{MethodRef, PerturbationPoint};

pub use interp::{
    execute, execute_uninstrumented, Activation, ExecutionResult, Exit, FoPlan, InjectionPlan,
    Interpreter, DEFAULT_MAX_DEPTH,
};
pub use parse::{parse_program, parse_workload, program_to_json, workload_to_json};

pub const FORMAT_VERSION: u64 = 1;
pub const CATCH_ALL: &str = "*";
/// Raised at a call site once the call stack exceeds the interpreter's depth limit.
pub const STACK_OVERFLOW: &str = "StackOverflowError";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProgramError {
    #[error("{locus}: {message}")]
    Invalid { locus: String, message: String },
    #[error("malformed document at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("step budget must be positive")]
    ZeroStepBudget,
}

impl ProgramError {
    pub(crate) fn invalid(locus: impl Into<String>, message: impl Into<String>) -> Self {
        ProgramError::Invalid {
            locus: locus.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatchPattern {
    Any,
    Type(String),
}

impl CatchPattern {
    pub fn matches(&self, exception: &str) -> bool {
        match self {
            CatchPattern::Any => true,
            CatchPattern::Type(t) => t == exception,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatchClause {
    pub types: Vec<CatchPattern>,
    pub body: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Emit(String),
    Call(MethodRef),
    Throw(String),
    Try {
        body: Vec<Statement>,
        catches: Vec<CatchClause>,
    },
    Loop {
        count: u32,
        body: Vec<Statement>,
    },
    Hang,
}

impl Statement {
    /// Number of statements in this subtree, itself included.
    pub fn size(&self) -> u32 {
        1 + match self {
            Statement::Try { body, catches } => {
                block_size(body) + catches.iter().map(|c| block_size(&c.body)).sum::<u32>()
            }
            Statement::Loop { body, .. } => block_size(body),
            _ => 0,
        }
    }
}

pub fn block_size(block: &[Statement]) -> u32 {
    block.iter().map(Statement::size).sum()
}

/// Statements are numbered in pre-order over the whole body tree (try
/// blocks, then each catch body, loop bodies inline); those numbers are the
/// perturbation locations of the method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodBody {
    /// Declared exception types, sorted and deduplicated.
    pub throws: Vec<String>,
    pub statements: Vec<Statement>,
}

impl MethodBody {
    pub fn location_count(&self) -> u32 {
        block_size(&self.statements)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramModel {
    entry: MethodRef,
    methods: BTreeMap<MethodRef, MethodBody>,
}

impl ProgramModel {
    /// Builds a program, checking the entry, call targets and loop counts.
    pub fn new(
        entry: MethodRef,
        methods: BTreeMap<MethodRef, MethodBody>,
    ) -> Result<Self, ProgramError> {
        if !methods.contains_key(&entry) {
            return Err(ProgramError::invalid(
                "entry",
                format!("entry method {entry} is not defined"),
            ));
        }
        for (name, body) in &methods {
            let locus = format!("methods.{name}");
            if body.statements.is_empty() {
                return Err(ProgramError::invalid(
                    format!("{locus}.body"),
                    "empty method body",
                ));
            }
            for t in &body.throws {
                crate::model::validate_exception_type(t)
                    .map_err(|e| ProgramError::invalid(format!("{locus}.throws"), e.to_string()))?;
            }
            check_block(&body.statements, &methods, &format!("{locus}.body"))?;
        }
        Ok(Self { entry, methods })
    }

    pub fn entry(&self) -> &MethodRef {
        &self.entry
    }

    pub fn methods(&self) -> &BTreeMap<MethodRef, MethodBody> {
        &self.methods
    }

    pub fn method(&self, name: &MethodRef) -> Option<&MethodBody> {
        self.methods.get(name)
    }

    /// All perturbation points of methods whose name starts with `filter`,
    /// ordered by method, then location, then exception type.
    pub fn enumerate_points(&self, filter: &str) -> Vec<PerturbationPoint> {
        let mut out = Vec::new();
        for (name, body) in &self.methods {
            if !name.as_str().starts_with(filter) {
                continue;
            }
            for location in 0..body.location_count() {
                for e in &body.throws {
                    out.push(PerturbationPoint::new(name.clone(), location, e.clone()));
                }
            }
        }
        out
    }
}

fn check_block(
    block: &[Statement],
    methods: &BTreeMap<MethodRef, MethodBody>,
    locus: &str,
) -> Result<(), ProgramError> {
    for (i, stmt) in block.iter().enumerate() {
        let here = format!("{locus}[{i}]");
        match stmt {
            Statement::Call(target) if !methods.contains_key(target) => {
                return Err(ProgramError::invalid(
                    here,
                    format!("call to undefined method {target}"),
                ));
            }
            Statement::Throw(t) => {
                crate::model::validate_exception_type(t)
                    .map_err(|e| ProgramError::invalid(&here, e.to_string()))?;
            }
            Statement::Emit(tok) if tok.is_empty() || tok.contains(char::is_whitespace) => {
                return Err(ProgramError::invalid(
                    here,
                    "emitted token must be non-empty without whitespace",
                ));
            }
            Statement::Loop { count, body } => {
                if *count == 0 {
                    return Err(ProgramError::invalid(here, "loop count must be >= 1"));
                }
                check_block(body, methods, &format!("{here}.body"))?;
            }
            Statement::Try { body, catches } => {
                check_block(body, methods, &format!("{here}.try"))?;
                for (j, c) in catches.iter().enumerate() {
                    if c.types.is_empty() {
                        return Err(ProgramError::invalid(
                            format!("{here}.catch[{j}]"),
                            "catch clause lists no types",
                        ));
                    }
                    check_block(&c.body, methods, &format!("{here}.catch[{j}].body"))?;
                }
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub method: MethodRef,
    pub repeat: u32,
}

/// The repeatable workload: top-level invocations run in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub invocations: Vec<Invocation>,
}

impl WorkloadSpec {
    /// Invokes the program's entry once.
    pub fn entry_once(program: &ProgramModel) -> Self {
        Self {
            invocations: vec![Invocation {
                method: program.entry().clone(),
                repeat: 1,
            }],
        }
    }

    pub fn validate(&self, program: &ProgramModel) -> Result<(), ProgramError> {
        for (i, inv) in self.invocations.iter().enumerate() {
            if inv.repeat == 0 {
                return Err(ProgramError::invalid(
                    format!("invocations[{i}].repeat"),
                    "repeat must be >= 1",
                ));
            }
            if program.method(&inv.method).is_none() {
                return Err(ProgramError::invalid(
                    format!("invocations[{i}].method"),
                    format!("undefined method {}", inv.method),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> MethodRef {
        MethodRef::new(s).unwrap()
    }

    fn body(throws: &[&str], statements: Vec<Statement>) -> MethodBody {
        MethodBody {
            throws: throws.iter().map(|s| s.to_string()).collect(),
            statements,
        }
    }

    #[test]
    fn two_exceptions_two_statements_give_four_points() {
        let methods = BTreeMap::from([(
            m("Class1/exampleMethod"),
            body(
                &["ExceptionA", "ExceptionB"],
                vec![Statement::Emit("x".into()), Statement::Emit("y".into())],
            ),
        )]);
        let p = ProgramModel::new(m("Class1/exampleMethod"), methods).unwrap();
        let pts = p.enumerate_points("");
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0].location, 0);
        assert_eq!(pts[0].exception, "ExceptionA");
        assert_eq!(pts[1].exception, "ExceptionB");
        assert_eq!(pts[3].location, 1);
    }

    #[test]
    fn no_throws_no_points_and_filter() {
        let methods = BTreeMap::from([
            (
                m("app/main"),
                body(&[], vec![Statement::Call(m("lib/read"))]),
            ),
            (
                m("lib/read"),
                body(&["IOException"], vec![Statement::Emit("r".into())]),
            ),
        ]);
        let p = ProgramModel::new(m("app/main"), methods).unwrap();
        assert_eq!(p.enumerate_points("app/").len(), 0);
        assert_eq!(p.enumerate_points("lib/").len(), 1);
        assert_eq!(p.enumerate_points("zzz").len(), 0);
    }

    #[test]
    fn nested_statements_are_locations() {
        let stmt = Statement::Try {
            body: vec![Statement::Emit("a".into()), Statement::Emit("b".into())],
            catches: vec![CatchClause {
                types: vec![CatchPattern::Any],
                body: vec![Statement::Loop {
                    count: 2,
                    body: vec![Statement::Emit("c".into())],
                }],
            }],
        };
        assert_eq!(stmt.size(), 5);
    }

    #[test]
    fn rejects_bad_programs() {
        let undefined = BTreeMap::from([(m("main"), body(&[], vec![Statement::Call(m("nope"))]))]);
        assert!(matches!(
            ProgramModel::new(m("main"), undefined),
            Err(ProgramError::Invalid { .. })
        ));
        let empty = BTreeMap::from([(m("main"), body(&[], vec![]))]);
        assert!(ProgramModel::new(m("main"), empty).is_err());
        let no_entry = BTreeMap::from([(m("x"), body(&[], vec![Statement::Hang]))]);
        assert!(ProgramModel::new(m("main"), no_entry).is_err());
        let zero_loop = BTreeMap::from([(
            m("main"),
            body(
                &[],
                vec![Statement::Loop {
                    count: 0,
                    body: vec![],
                }],
            ),
        )]);
        assert!(ProgramModel::new(m("main"), zero_loop).is_err());
    }
}
