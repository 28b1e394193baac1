mod artifacts;
mod commands;
mod config;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use artifacts::Artifacts;
use config::{Command, Layered, Source, OUT_ENV};
use error::{CliError, ErrorKind};

/// Steady states, linearized spectra and instability dynamics of radial
/// semilinear heat and wave equations.
#[derive(Parser)]
#[command(name = "instablab", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Stability classification of positive radial steady states.
    Classify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Computes a steady-state profile.
    Steady {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Ground state of the linearization at a steady state.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Steady state, spectrum, then the perturbed evolution.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        evolve: EvolveArgs,
    },
    /// The comparison and blow-up lemmas for scalar ODEs.
    Ode {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ode: OdeArgs,
    },
    /// Runs the acceptance suite and audits the output directory.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u8>>,
    },
    /// Parallel scan over the exponent.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        problem: ProblemArgs,
        /// ground_state or classify.
        #[arg(long)]
        op: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat TOML file of dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides INSTABLAB_OUT.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sets any key, e.g. `--set solver.cap=1e6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
    /// Record the wall time in manifest.json.
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long)]
    n: Option<u32>,
    /// Exponent, or `lo:hi:step` for sweeps.
    #[arg(long)]
    p: Option<String>,
    /// power or exponential.
    #[arg(long)]
    nonlinearity: Option<String>,
    /// heat or wave.
    #[arg(long)]
    equation: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    damping: Option<f64>,
    /// bubble, exp2d, supercritical, potential or zero.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    nodes: Option<i64>,
}

#[derive(Args)]
struct EvolveArgs {
    /// chi_multiple or gaussian_bump.
    #[arg(long)]
    perturbation: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    amplitude: Option<f64>,
    /// zero, sigma or lambda2.
    #[arg(long)]
    psi1: Option<String>,
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Args)]
struct OdeArgs {
    /// ode1 or ode2.
    #[arg(long)]
    lemma: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    y0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    yp0: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// zero, trig or random.
    #[arg(long)]
    forcing: Option<String>,
}

type Assignments = Vec<(String, Value)>;

fn push<T: Into<Value>>(list: &mut Assignments, key: &str, v: Option<T>) {
    if let Some(v) = v {
        list.push((key.to_string(), v.into()));
    }
}

impl ProblemArgs {
    fn assignments(&self, list: &mut Assignments) -> Result<(), CliError> {
        push(list, "spec.n", self.n);
        if let Some(p) = &self.p {
            if p.contains(':') {
                list.push(("sweep.p_range".into(), Value::String(p.clone())));
            } else {
                let v: f64 = p.trim().parse().map_err(|_| CliError::config(format!("key `spec.p`: not a number: `{p}`")))?;
                list.push(("spec.p".into(), v.into()));
            }
        }
        push(list, "spec.nonlinearity", self.nonlinearity.clone());
        push(list, "spec.equation", self.equation.clone());
        push(list, "spec.damping", self.damping);
        push(list, "steady.family", self.family.clone());
        push(list, "steady.lambda", self.lambda);
        push(list, "steady.alpha", self.alpha);
        push(list, "grid.r_max", self.r_max);
        push(list, "grid.nodes", self.nodes);
        Ok(())
    }
}

impl Sub {
    fn split(&self) -> Result<(Command, &Common, Assignments), CliError> {
        let mut list = Vec::new();
        let (command, common) = match self {
            Sub::Classify { common, problem } => {
                problem.assignments(&mut list)?;
                (Command::Classify, common)
            }
            Sub::Steady { common, problem } => {
                problem.assignments(&mut list)?;
                (Command::Steady, common)
            }
            Sub::Spectrum { common, problem } => {
                problem.assignments(&mut list)?;
                (Command::Spectrum, common)
            }
            Sub::Evolve { common, problem, evolve } => {
                problem.assignments(&mut list)?;
                push(&mut list, "perturbation.family", evolve.perturbation.clone());
                push(&mut list, "perturbation.amplitude", evolve.amplitude);
                push(&mut list, "perturbation.psi1", evolve.psi1.clone());
                push(&mut list, "solver.t_max", evolve.t_max);
                (Command::Evolve, common)
            }
            Sub::Ode { common, ode } => {
                push(&mut list, "ode.lemma", ode.lemma.clone());
                push(&mut list, "ode.a", ode.a);
                push(&mut list, "ode.b", ode.b);
                push(&mut list, "ode.y0", ode.y0);
                push(&mut list, "ode.yp0", ode.yp0);
                push(&mut list, "ode.p", ode.p);
                push(&mut list, "ode.forcing", ode.forcing.clone());
                (Command::Ode, common)
            }
            Sub::Verify { common, criteria } => {
                push(&mut list, "verify.criteria", criteria.clone());
                (Command::Verify, common)
            }
            Sub::Sweep { common, problem, op, threads } => {
                problem.assignments(&mut list)?;
                push(&mut list, "sweep.op", op.clone());
                push(&mut list, "sweep.threads", *threads);
                (Command::Sweep, common)
            }
        };
        push(&mut list, "output.dir", common.out.clone());
        push(&mut list, "seed", common.seed);
        if common.plot {
            list.push(("output.plot".into(), true.into()));
        }
        if common.wall_time {
            list.push(("output.wall_time".into(), true.into()));
        }
        for text in &common.set {
            list.push(config::parse_assignment(text)?);
        }
        Ok((command, common, list))
    }
}

fn execute(sub: &Sub) -> Result<(), CliError> {
    let start = Instant::now();
    let (command, common, flags) = sub.split()?;
    let mut layered = Layered::new();
    if let Some(path) = &common.config {
        layered.load_file(path)?;
    }
    layered.apply_env(std::env::var(OUT_ENV).ok())?;
    for (key, value) in flags {
        layered.set(&key, value, Source::Flag)?;
    }
    let config = layered.finish()?;
    let mut out = Artifacts::create(command, &config)?;
    let result = commands::run(command, &config, &mut out);
    let wall = config.output.wall_time.then(|| start.elapsed().as_secs_f64());
    let (dir, hash) = out.finish(wall)?;
    eprintln!("instablab: outputs in {} (manifest {hash})", dir.display());
    let audited = if command == Command::Verify { commands::audit_outputs(&dir) } else { Ok(()) };
    result?;
    audited
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::new(ErrorKind::Usage, e.to_string().trim());
            eprintln!("{}", err.record(None));
            return ExitCode::from(err.kind.exit_code() as u8);
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let command = cli.command.split().ok().map(|(c, _, _)| c.name());
            eprintln!("{}", err.record(command));
            ExitCode::from(err.kind.exit_code() as u8)
        }
    }
}
