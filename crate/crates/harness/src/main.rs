use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use bridgeless_harness::formula::{p_liveness, p_liveness_exact};
use bridgeless_harness::liveness::{monte_carlo_liveness, to_csv};
use bridgeless_harness::runner::run_scenario;
use bridgeless_harness::scenario::ScenarioConfig;
use bridgeless_harness::suites::{selftest, SelftestPlan};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bridgeless", version, about = "Deterministic cross-chain bridge simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML scenario and report session outcomes and observer verdicts.
    Run {
        scenario: PathBuf,
        /// Print the full event log.
        #[arg(long)]
        log: bool,
    },
    /// Monte Carlo liveness curve as CSV.
    LivenessCurve {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 20)]
        max_sessions: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted or "-".
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit nonzero if any point falls outside the tolerance band.
        #[arg(long)]
        check: bool,
    },
    /// Closed-form probability of finalizing within r sessions.
    Formula {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        t: u64,
        #[arg(long)]
        r: u32,
    },
    /// Run the observer and property suites.
    Selftest {
        #[arg(long, default_value_t = SelftestPlan::default().scenarios)]
        scenarios: u64,
        #[arg(long, default_value_t = SelftestPlan::default().seed)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { scenario, log } => run(&scenario, log),
        Command::LivenessCurve {
            n,
            t,
            trials,
            max_sessions,
            seed,
            out,
            check,
        } => liveness_curve(n, t, trials, max_sessions, seed, out, check),
        Command::Formula { n, t, r } => match (p_liveness(n, t, r), p_liveness_exact(n, t, r)) {
            (Ok(p), Ok(exact)) => {
                println!("{p:.6} ({exact})");
                ExitCode::SUCCESS
            }
            (Err(e), _) | (_, Err(e)) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Selftest { scenarios, seed } => {
            let plan = SelftestPlan {
                scenarios,
                seed,
                ..SelftestPlan::default()
            };
            let reports = selftest(plan);
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().all(|r| r.passed()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(path: &PathBuf, log: bool) -> ExitCode {
    let cfg = match std::fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|text| ScenarioConfig::parse(&text).map_err(|e| e.to_string()))
    {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let report = match run_scenario(&cfg, log) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut text = String::new();
    macro_rules! out {
        ($($arg:tt)*) => {{
            let _ = writeln!(text, $($arg)*);
        }};
    }
    for line in &report.log {
        out!("{line}");
    }
    for o in &report.outcomes {
        let committee = o.committee.as_ref().map_or("-".to_owned(), |c| format!("{c:?}"));
        out!("session {} proposer={} committee={committee}: {}", o.sid, o.proposer, o.kind);
    }
    for (id, statuses) in &report.final_statuses {
        let shown: Vec<_> = statuses.iter().map(|s| s.map_or("unknown", |s| s.as_str())).collect();
        out!("request {id}: {}", shown.join(" "));
    }
    for (id, res) in &report.client_withdrawals {
        match res {
            Ok(h) => out!("client withdrawal {id}: {h}"),
            Err(e) => out!("client withdrawal {id}: rejected: {e}"),
        }
    }
    if report.is_clean() {
        out!("observer: no violations");
    } else {
        for v in &report.violations {
            out!("violation: {v}");
        }
    }
    // A closed pipe (e.g. `| head`) is not an error worth a panic.
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    if report.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}


fn liveness_curve(n: usize, t: usize, trials: u64, max_sessions: u32, seed: u64, out: Option<PathBuf>, check: bool) -> ExitCode {
    if trials == 0 {
        eprintln!("error: --trials must be at least 1");
        return ExitCode::from(2);
    }
    let points = match monte_carlo_liveness(n, t, trials, max_sessions, seed) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let csv = to_csv(&points);
    match out.as_deref() {
        Some(p) if p.as_os_str() != "-" => {
            if let Err(e) = std::fs::write(p, &csv) {
                eprintln!("error: {}: {e}", p.display());
                return ExitCode::from(2);
            }
        }
        _ => {
            let _ = std::io::stdout().lock().write_all(csv.as_bytes());
        }
    }
    let outside: Vec<u32> = points.iter().filter(|p| !p.within_tolerance()).map(|p| p.r).collect();
    if outside.is_empty() {
        eprintln!("all {} points within tolerance", points.len());
    } else {
        eprintln!("outside tolerance at r = {outside:?}");
        if check {
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
