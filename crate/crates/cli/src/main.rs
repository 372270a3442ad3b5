use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod report;

#[derive(Parser, Serialize)]
#[command(name = "ecfam", version, about = "Experiments on the family y^2 = x^3 + ax + b")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct Common {
    /// Worker threads for sweeps; defaults to all cores.
    #[arg(long, global = true, env = "ECFAM_THREADS")]
    threads: Option<usize>,
    /// Path of the JSON report (CSV or JSON table for `coeffs`).
    #[arg(long, global = true)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Run outside the exponent ranges where the asymptotic laws are proved.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true, value_enum, default_value_t = WeightArg::Bump)]
    weight: WeightArg,
    /// Largest p^2 for a per-prime residue table.
    #[arg(long, global = true, default_value_t = 10_000)]
    max_pairs_per_prime: u64,
    /// Largest number of evaluations for one complete sum.
    #[arg(long, global = true, default_value_t = 100_000_000)]
    max_evaluations: u64,
    /// Byte budget for the coefficient tables of one sweep.
    #[arg(long, global = true, default_value_t = 2 << 30)]
    memory_budget: usize,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum WeightArg {
    Bump,
    Sharp,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Exhaustive check of the complete-sum identities.
    VerifyLemmas {
        #[arg(long, default_value_t = 105)]
        rmax: u64,
    },
    /// Coefficient table a(n), lambda(n), rho(n) of one curve.
    Coeffs {
        #[arg(long, allow_negative_numbers = true)]
        a: i64,
        #[arg(long, allow_negative_numbers = true)]
        b: i64,
        #[arg(long, default_value_t = 100)]
        nmax: usize,
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        format: TableFormat,
    },
    /// Q(r), and Q_t(r), Q'_k(r) when t or k is given.
    CompleteSums {
        #[arg(long)]
        r: u64,
        #[arg(long)]
        t: Option<u64>,
        #[arg(long)]
        k: Option<u64>,
    },
    /// Main-term Euler product c_S with its tail bounds.
    Constants {
        #[arg(long, default_value_t = 97)]
        pmax: u64,
        #[arg(long, default_value_t = 16)]
        kmax: u32,
    },
    /// Conductor and root number from consistency of the functional equation.
    AfeCheck {
        #[arg(long)]
        a: i64,
        #[arg(long)]
        b: i64,
        #[arg(long, default_value_t = ecfam::curves::AFE_VARIANCE_THRESHOLD)]
        threshold: f64,
    },
    /// Weighted family size against its closed form.
    FamilyCount {
        #[arg(long = "X", alias = "x")]
        x: f64,
    },
    /// Average of L_U, U = X^nu, against c_S.
    FirstMoment {
        #[arg(long = "X", alias = "x")]
        x: f64,
        #[arg(long, default_value_t = 0.5)]
        nu: f64,
        #[arg(long, default_value_t = 97)]
        pmax: u64,
        #[arg(long, default_value_t = 16)]
        kmax: u32,
    },
    /// Average of L_U M(E) against 1/2.
    MollifiedFirstMoment {
        #[arg(long = "X", alias = "x")]
        x: f64,
        #[arg(long, default_value_t = 0.4)]
        nu: f64,
        #[arg(long, default_value_t = 0.1)]
        kappa: f64,
        /// Coefficients of P, constant term first.
        #[arg(long, value_delimiter = ',', default_value = "0,1", allow_negative_numbers = true)]
        poly: Vec<f64>,
    },
    /// Growth of L_V^2 over an alpha grid, or of M(E)^2 over a beta grid.
    SecondMoment {
        #[arg(long = "X", alias = "x")]
        x: f64,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1", allow_negative_numbers = true)]
        poly: Vec<f64>,
    },
    /// Growth of L_V1 L_V2 M_1 M_2 along a ray of exponents.
    CrossMoment {
        #[arg(long = "X", alias = "x")]
        x: f64,
        #[arg(long)]
        alpha1: f64,
        #[arg(long)]
        alpha2: f64,
        #[arg(long, default_value_t = 0.0)]
        beta1: f64,
        #[arg(long, default_value_t = 0.0)]
        beta2: f64,
        /// Multipliers applied to the whole ray.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        scales: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1", allow_negative_numbers = true)]
        poly: Vec<f64>,
    },
    /// Dirichlet-sum oracles for the three log-power integrals.
    Asymptotics {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        prop: u8,
        #[arg(long = "V")]
        v: Option<f64>,
        #[arg(long = "M")]
        m: Option<f64>,
        #[arg(long, default_value_t = 1)]
        j1: u32,
        #[arg(long, default_value_t = 1)]
        j2: u32,
        #[arg(long = "V1")]
        v1: Option<f64>,
        #[arg(long = "V2")]
        v2: Option<f64>,
        #[arg(long = "M1")]
        m1: Option<f64>,
        #[arg(long = "M2")]
        m2: Option<f64>,
        /// Drop every Moebius weight except mu(1).
        #[arg(long)]
        no_mobius: bool,
        /// alpha1,alpha2,beta1,beta2 for a growth fit over `--xs`.
        #[arg(long, value_delimiter = ',')]
        ray: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        xs: Vec<f64>,
        /// Closed forms at M_i = X^beta_i with log X = `--log-x`.
        #[arg(long)]
        beta1: Option<f64>,
        #[arg(long)]
        beta2: Option<f64>,
        #[arg(long)]
        log_x: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::VerifyLemmas { .. } => "verify-lemmas",
            Command::Coeffs { .. } => "coeffs",
            Command::CompleteSums { .. } => "complete-sums",
            Command::Constants { .. } => "constants",
            Command::AfeCheck { .. } => "afe-check",
            Command::FamilyCount { .. } => "family-count",
            Command::FirstMoment { .. } => "first-moment",
            Command::MollifiedFirstMoment { .. } => "mollified-first-moment",
            Command::SecondMoment { .. } => "second-moment",
            Command::CrossMoment { .. } => "cross-moment",
            Command::Asymptotics { .. } => "asymptotics",
        }
    }
}

/// `usage` errors exit 2, guard trips 3, everything else 1.
fn exit_code(e: &anyhow::Error) -> u8 {
    use ecfam::Error as E;
    if e.downcast_ref::<commands::UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<E>() {
        Some(E::Cost(_) | E::Memory(_)) => 3,
        Some(E::Domain(_) | E::Precondition(_) | E::InvalidModulus(_) | E::NoInverse { .. }) => 2,
        _ => 1,
    }
}

#[derive(Serialize)]
struct Echo<'a> {
    #[serde(flatten)]
    cli: &'a Cli,
    resolved_threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if n == 0 {
            Cli::command()
                .error(clap::error::ErrorKind::ValueValidation, "--threads must be at least 1")
                .exit();
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let echo = Echo {
        cli: &cli,
        resolved_threads: rayon::current_num_threads(),
    };
    let name = cli.command.name();
    let t0 = Instant::now();
    let result = commands::run(&cli.command, &cli.common);
    let wall = t0.elapsed().as_secs_f64();
    let (outcome, error, code) = match result {
        Ok(o) => {
            let code = if o.pass() { 0 } else { 1 };
            (Some(o), None, code)
        }
        Err(e) => {
            let code = exit_code(&e);
            (None, Some(format!("{e:#}")), code)
        }
    };
    if let Some(o) = &outcome {
        for l in &o.summary {
            println!("{l}");
        }
        for (k, v) in &o.checks {
            println!("check {k}: {}", if *v { "pass" } else { "FAIL" });
        }
    }
    if let Some(e) = &error {
        eprintln!("error: {e}");
    }
    let writes_report = !matches!(cli.command, Command::Coeffs { .. });
    if let (true, Some(path)) = (writes_report, &cli.common.out) {
        let written = report::build(name, &echo, outcome.as_ref(), error, wall)
            .and_then(|r| report::write(path, &r));
        if let Err(e) = written {
            eprintln!("error: writing report: {e:#}");
            return ExitCode::from(1);
        }
    }
    println!("{name}: {} in {wall:.2}s", if code == 0 { "pass" } else { "fail" });
    ExitCode::from(code)
}
