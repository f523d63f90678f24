use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use minislot::experiment::{
    emit_csv, load_scenarios, parse_algorithms, run_scenario, Algorithm, ResultTable, Scenario,
};
use minislot::{blind_allocate, minmax_allocate, BlindObjective, SlotSchedule};

/// Sweeps base delays over multi-AP slot schedules and writes model RTT and
/// throughput per VSTA as CSV.
#[derive(Debug, Parser)]
#[command(name = "minislot", version, long_about = None)]
struct Args {
    /// Built-in scenario (case1, case2, case3, fig5) or path to a TOML scenario file
    #[arg(long, default_value = "case1")]
    scenario: String,
    /// RNG seed, overrides the scenario's
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path, stdout if omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of nopolicy,minmax,eq1,eq2,upperbound
    #[arg(long)]
    algorithms: Option<String>,
    /// RTT samples per VSTA and delay
    #[arg(long)]
    samples: Option<usize>,
    /// Mean send offset as a fraction of the connected time
    #[arg(long)]
    mean_fraction: Option<f64>,
    /// Print the slot schedule chosen by a delay-independent algorithm
    /// (nopolicy, minmax or eq2) instead of running the sweep
    #[arg(long, value_name = "ALGORITHM")]
    print_schedule: Option<Algorithm>,
}

fn apply_overrides(args: &Args, scenarios: &mut [Scenario]) -> anyhow::Result<()> {
    let algorithms = args
        .algorithms
        .as_deref()
        .map(parse_algorithms)
        .transpose()?;
    for s in scenarios.iter_mut() {
        if let Some(seed) = args.seed {
            s.sampler.seed = seed;
        }
        if let Some(n) = args.samples {
            s.sampler.n_samples = n;
        }
        if let Some(mf) = args.mean_fraction {
            s.sampler.mean_fraction = mf;
        }
        if let Some(algs) = &algorithms {
            s.algorithms = algs.clone();
        }
        s.validate()
            .with_context(|| format!("scenario `{}`", s.name))?;
    }
    Ok(())
}

fn fixed_schedule(scenario: &Scenario, algorithm: Algorithm) -> anyhow::Result<SlotSchedule> {
    let plan = scenario.plan()?;
    Ok(match algorithm {
        Algorithm::NoPolicy => SlotSchedule::contiguous(&plan),
        Algorithm::MinMax => minmax_allocate(&plan).schedule,
        Algorithm::Eq2 => {
            blind_allocate(&plan, BlindObjective::Eq2, scenario.enumeration)?.schedule
        }
        other => bail!("{other} depends on the path delays; pick nopolicy, minmax or eq2"),
    })
}

fn run(args: &Args) -> anyhow::Result<()> {
    let mut scenarios = load_scenarios(&args.scenario)?;
    apply_overrides(args, &mut scenarios)?;

    if let Some(algorithm) = args.print_schedule {
        for s in &scenarios {
            let schedule = fixed_schedule(s, algorithm)?;
            println!("# {} {algorithm}", s.name);
            print!("{}", schedule.to_record());
        }
        return Ok(());
    }

    let mut table = ResultTable::default();
    for s in &scenarios {
        eprintln!("scenario {} seed {}", s.name, s.sampler.seed);
        table.extend(run_scenario(s).with_context(|| format!("scenario `{}`", s.name))?);
    }
    let csv = emit_csv(&table);
    match &args.out {
        Some(path) => {
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
