//! In-process simulator speaking the agent protocol, so the external
//! backend can be exercised end to end without a JVM.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;

use oblivion_core::controller::DEFAULT_STEP_BUDGET;
use oblivion_core::model::ExitKind;
use oblivion_core::protocol::{
    read_activation, write_monitor_log, MonitorLog, ENV_CONFIG, ENV_LOG, FREEZE_EXIT_CODE,
};
use oblivion_core::simprog::{parse_program, parse_workload, Interpreter, WorkloadSpec};

#[derive(Args)]
pub struct AgentArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    workload: Option<PathBuf>,
}

pub fn run(args: AgentArgs) -> ExitCode {
    match simulate(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("agent-sim: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn exit_code(kind: ExitKind) -> ExitCode {
    match kind {
        ExitKind::Normal => ExitCode::SUCCESS,
        ExitKind::Crash => ExitCode::from(1),
        ExitKind::Hang => ExitCode::from(FREEZE_EXIT_CODE as u8),
    }
}

fn simulate(args: &AgentArgs) -> anyhow::Result<ExitCode> {
    let program = parse_program(&std::fs::read_to_string(&args.program)?)?;
    let workload = match &args.workload {
        Some(w) => parse_workload(&std::fs::read_to_string(w)?, &program)?,
        None => WorkloadSpec::entry_once(&program),
    };
    let interp = Interpreter::new(&program);
    let Some(config) = std::env::var_os(ENV_CONFIG) else {
        let (trace, exit) = interp.execute_uninstrumented(&workload, DEFAULT_STEP_BUDGET)?;
        print_trace(&trace);
        return Ok(exit_code(exit));
    };
    let activation = read_activation(&PathBuf::from(config))?;
    let result = interp.execute(
        &workload,
        &activation.injection,
        &activation.fo,
        activation.step_budget,
    )?;
    let obs = result.into_observation();
    if let Some(log) = std::env::var_os(ENV_LOG) {
        write_monitor_log(&MonitorLog::from_observation(&obs), &PathBuf::from(log))?;
    }
    print_trace(&obs.trace);
    Ok(exit_code(obs.exit))
}

fn print_trace(trace: &[String]) {
    for t in trace {
        println!("{t}");
    }
}
