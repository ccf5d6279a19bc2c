//! Exception-injection resilience campaigns.
//!
//! A campaign runs a target under a repeatable workload, enumerates the
//! points where declared exceptions can be raised, classifies each point as
//! fragile, sensitive or immunized by injecting once and then on every
//! reach, and searches the observed call stacks for methods where a
//! catch-all wrapper silencing the exception keeps the behavior acceptable.

pub mod config;
pub mod controller;
pub mod model;
pub mod protocol;
pub mod report;
pub mod simprog;

pub use controller::{
    Campaign, CampaignConfig, CampaignError, CampaignState, ExternalTarget, Journal, OracleSource,
    SimulatorTarget, Target,
};
pub use model::{
    binding_status, classify, evaluate_oracle, experiment_budget, transition_label,
    AcceptabilityOracle, BindingStatus, CandidateBinding, Classification, Classified, DomainCheck,
    ExitKind, FaultModel, MethodRef, Observation, OracleVerdict, PerturbationPoint, PointCategory,
    Transition, VerdictReason,
};
pub use report::{build_report, render, Format, Report};
pub use simprog::{FoPlan, InjectionPlan, ProgramModel, WorkloadSpec};
