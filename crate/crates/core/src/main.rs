use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hybridrelay::alloc::DualParams;
use hybridrelay::report::{summary_kv, sweep_csv, trace_csv, write_atomic};
use hybridrelay::verify::{check_subproblems, check_tiny_slots};
use hybridrelay::{metrics, run, sweep, Error, Policy, SweepAxis, SystemConfig, ValidatedConfig, Window};

#[derive(Parser)]
#[command(name = "hybridrelay", version, about = "Hybrid-energy OFDMA relay downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one policy and write its trace, summary and geometry.
    Run {
        /// Config file (`key = value`); defaults to the reference cell.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 12_000)]
        slots: u64,
        #[arg(long, default_value = "free")]
        policy: Policy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep `V` or `varphi` over a list of values and seeds.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 6_000)]
        slots: u64,
        #[arg(long, default_value = "free")]
        policy: Policy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the allocator with brute-force oracles.
    Verify {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 2000)]
        resolution: usize,
        /// Instances for the exhaustive whole-slot check (0 skips it).
        #[arg(long, default_value_t = 200)]
        slot_cases: usize,
        #[arg(long, default_value_t = 200)]
        slot_resolution: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Reference cell under all four policies plus both sweeps.
    PaperScenario {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12_000)]
        slots: u64,
        #[arg(long, default_value_t = 6_000)]
        sweep_slots: u64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
    },
}

fn load_config(path: Option<&Path>) -> hybridrelay::Result<ValidatedConfig> {
    let cfg = match path {
        Some(p) => SystemConfig::parse(&std::fs::read_to_string(p)?)?,
        None => SystemConfig::paper_default(),
    };
    cfg.validate()
}

fn write_run(cfg: &ValidatedConfig, policy: Policy, seed: u64, slots: u64, dir: &Path, prefix: &str) -> hybridrelay::Result<()> {
    let trace = run(cfg, policy, seed, slots)?;
    write_atomic(&dir.join(format!("{prefix}trace.csv")), &trace_csv(&trace))?;
    let mut summary = summary_kv(&metrics(&trace, Window::LastHalf));
    summary.insert_str(0, &format!("policy = {policy}\nseed = {seed}\n"));
    write_atomic(&dir.join(format!("{prefix}summary.txt")), &summary)?;
    write_atomic(&dir.join(format!("{prefix}geometry.csv")), &trace.geometry.to_csv())?;
    Ok(())
}

fn write_sweep(
    cfg: &ValidatedConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    slots: u64,
    policy: Policy,
    path: &Path,
) -> hybridrelay::Result<()> {
    let rows = sweep(cfg, axis, values, seeds, slots, policy);
    write_atomic(path, &sweep_csv(axis, &rows))
}

/// Five ascending `V` values inside the battery-feasible range.
fn v_values(cfg: &SystemConfig) -> Vec<f64> {
    let top = cfg.v_upper_bound();
    [0.05, 0.25, 0.5, 0.75, 1.0].iter().map(|f| (f * top).floor()).collect()
}

fn verify(cases: usize, resolution: usize, slot_cases: usize, slot_resolution: usize, seed: u64) -> hybridrelay::Result<bool> {
    let mut ok = true;
    for r in check_subproblems(cases, resolution, seed)? {
        println!(
            "{} subproblem: {} draws, closed-grid in [{:.3e}, {:.3e}], {} out of tolerance, {} below grid bound: {}",
            r.kind,
            r.cases,
            r.min_excess,
            r.max_excess,
            r.out_of_tolerance,
            r.below_grid,
            if r.passed() { "PASS" } else { "FAIL" }
        );
        ok &= r.passed();
    }
    if slot_cases > 0 {
        let cfg = SystemConfig::paper_default();
        let params = DualParams { step0: 1.0 / 1.5, ..DualParams::from_config(&cfg) };
        let r = check_tiny_slots(slot_cases, slot_resolution, seed, &params)?;
        println!(
            "slot optimality: {} instances, {:.1}% at >= 0.95, min ratio {:.4}: {}",
            r.ratios.len(),
            100.0 * r.share_at_least(0.95),
            r.min_ratio(),
            if r.passed() { "PASS" } else { "FAIL" }
        );
        ok &= r.passed();
    }
    Ok(ok)
}

fn paper_scenario(out: &Path, slots: u64, sweep_slots: u64, seeds: &[u64]) -> hybridrelay::Result<()> {
    let cfg = SystemConfig::paper_default().validate()?;
    let seed = seeds.first().copied().unwrap_or(1);
    for policy in Policy::ALL {
        write_run(&cfg, policy, seed, slots, out, &format!("{policy}_"))?;
    }
    write_sweep(&cfg, SweepAxis::V, &v_values(&cfg), seeds, sweep_slots, Policy::Free, &out.join("sweep_v.csv"))?;
    let varphi = [20.0, 10.0, 2.0, 0.5, 0.1];
    write_sweep(&cfg, SweepAxis::Varphi, &varphi, seeds, sweep_slots, Policy::Free, &out.join("sweep_varphi.csv"))?;
    write_sweep(
        &cfg,
        SweepAxis::Varphi,
        &varphi,
        seeds,
        sweep_slots,
        Policy::OnGridOnly,
        &out.join("sweep_varphi_grid-only.csv"),
    )?;
    Ok(())
}

fn dispatch(cli: Cli) -> hybridrelay::Result<bool> {
    match cli.command {
        Command::Run { config, seed, slots, policy, out } => {
            let cfg = load_config(config.as_deref())?;
            write_run(&cfg, policy, seed, slots, &out, "")?;
        }
        Command::Sweep { config, axis, values, seeds, slots, policy, out } => {
            let cfg = load_config(config.as_deref())?;
            write_sweep(&cfg, axis, &values, &seeds, slots, policy, &out.join(format!("sweep_{}.csv", axis.as_str())))?;
        }
        Command::Verify { cases, resolution, slot_cases, slot_resolution, seed } => {
            return verify(cases, resolution, slot_cases, slot_resolution, seed);
        }
        Command::PaperScenario { out, slots, sweep_slots, seeds } => {
            paper_scenario(&out, slots, sweep_slots, &seeds)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Invariant { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
