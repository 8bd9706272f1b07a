use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use reflectionless::converge::{run_converge, Sequence};
use reflectionless::measures::{AtomicMeasure, FiniteMeasure};
use reflectionless::potential::{
    kdv_residual, potential_sources, GramEvaluator, Potential, PotentialInput, SampledPotential,
};
use reflectionless::scattering::{
    forward_map, inverse_map_with, inverse_solvers, kdv_evolve, ScatteringData,
};
use reflectionless::spectrum::{schrodinger_eigs, verify_spectral_bound, BoundOptions};
use reflectionless::stochastic::{
    estimate_log_phi, estimate_log_phi_negative, estimate_phi_derivatives, gaussian_moment_check,
    CompoundOUSpec, MCConfig, MCEstimate,
};
use reflectionless::Error;

#[derive(Parser)]
#[command(
    name = "rlpot",
    version,
    about = "Reflectionless potentials and their Gaussian representation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward and inverse scattering maps.
    #[command(subcommand)]
    Scatter(Scatter),
    /// Potential tables.
    #[command(subcommand)]
    Potential(PotentialCmd),
    /// KdV flow on scattering data.
    #[command(subcommand)]
    Kdv(Kdv),
    /// Monte Carlo estimates.
    #[command(subcommand)]
    Mc(Mc),
    /// Successive sup-differences along an approximating sequence.
    Converge(ConvergeArgs),
    /// Finite-difference spectra.
    #[command(subcommand)]
    Spectrum(SpectrumCmd),
}

#[derive(Args)]
struct Io {
    /// Input JSON file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Points {
    /// Comma-separated points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Vec<f64>,
    /// Uniform grid `lo:hi:n`.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 100_000)]
    n_paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Simulation horizon.
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    q_grid: usize,
}

#[derive(Subcommand)]
enum Scatter {
    /// Measure to scattering data.
    Fwd(Io),
    /// Scattering data to measure.
    Inv {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value = "polynomial")]
        solver: String,
    },
}

#[derive(Subcommand)]
enum PotentialCmd {
    /// CSV of `x,u,u1,u2,u3` (`x,u` for the riccati source).
    Eval {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        points: Points,
        #[arg(long, default_value = "gram")]
        source: String,
    },
}

#[derive(Subcommand)]
enum Kdv {
    /// Scattering data at time `t`.
    Evolve {
        #[command(flatten)]
        io: Io,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
    },
    /// CSV of `x,t,residual`.
    Residual {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        points: Points,
        /// Comma-separated times.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "0"
        )]
        t: Vec<f64>,
    },
}

#[derive(Subcommand)]
enum Mc {
    /// `log Φ` at `x ≥ 0`.
    Logphi {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        points: Points,
        #[command(flatten)]
        mc: McArgs,
    },
    /// `Φ′` and `Φ″` at `x ≥ 0`.
    Derivs {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        points: Points,
        #[command(flatten)]
        mc: McArgs,
    },
    /// `log Φ` at `x ≤ 0` through the reflected measure.
    Negative {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        points: Points,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Gaussian moments of a compound OU spec.
    Moments {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        /// Comma-separated moment orders.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        m: Vec<u32>,
        #[command(flatten)]
        mc: McArgs,
    },
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    io: Io,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
    schedule: Vec<usize>,
    #[arg(long, default_value = "0:1:21", allow_hyphen_values = true)]
    grid: String,
    #[arg(long, default_value = "closed_form")]
    mode: String,
    #[arg(long, default_value = "discretize")]
    sequence: String,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Subcommand)]
enum SpectrumCmd {
    /// Lowest eigenvalues; input is scattering data, a measure, or an `x,u` CSV.
    Eigs {
        #[command(flatten)]
        io: Io,
        #[arg(long = "L", default_value_t = 15.0)]
        l: f64,
        #[arg(long, default_value_t = 5e-3)]
        h: f64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value = "gram")]
        source: String,
    },
    /// Spectral bound along `discretize(σ, n)` for the schedule.
    Bound {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        schedule: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long = "L", default_value_t = 15.0)]
        l: f64,
        #[arg(long, default_value_t = 5e-3)]
        h: f64,
    },
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn read_text(path: &PathBuf) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Outcome<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Scattering data when the file has `entries`, a measure otherwise.
fn read_potential_input(path: &PathBuf) -> Outcome<PotentialInput> {
    let value: serde_json::Value = serde_json::from_str(&read_text(path)?)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| invalid(format!("{}: {e}", path.display()));
    if value.get("entries").is_some() {
        return Ok(PotentialInput::Scattering(
            serde_json::from_value(value).map_err(bad)?,
        ));
    }
    let sigma: FiniteMeasure = serde_json::from_value(value).map_err(bad)?;
    Ok(PotentialInput::Measure(sigma.as_atomic()?.clone()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Outcome<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn parse_grid(spec: &str) -> Outcome<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || invalid(format!("grid '{spec}' is not lo:hi:n"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    match n {
        0 => Err(bad()),
        1 => Ok(vec![lo]),
        _ => Ok((0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()),
    }
}

impl Points {
    fn resolve(&self) -> Outcome<Vec<f64>> {
        let mut xs = self.x.clone();
        if let Some(g) = &self.grid {
            xs.extend(parse_grid(g)?);
        }
        if xs.is_empty() {
            return Err(invalid("no evaluation points (use --x or --grid)"));
        }
        Ok(xs)
    }
}

impl McArgs {
    fn config(&self, xs: &[f64]) -> MCConfig {
        let far = xs.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let horizon = self.horizon.unwrap_or_else(|| {
            let steps = (far / self.dt).ceil();
            (steps * self.dt).max(self.dt)
        });
        MCConfig {
            n_paths: self.n_paths,
            dt: self.dt,
            t: horizon,
            seed: self.seed,
            q_grid: self.q_grid,
        }
    }
}

fn mc_csv(xs: &[f64], est: &[MCEstimate]) -> String {
    let mut s = String::from("x,value,stderr,n_paths,seed\n");
    for (x, e) in xs.iter().zip(est) {
        let _ = writeln!(
            s,
            "{x:.16e},{:.16e},{:.16e},{},{}",
            e.value, e.stderr, e.n_paths, e.seed
        );
    }
    s
}

fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Scatter(Scatter::Fwd(io)) => {
            let sigma: FiniteMeasure = read_json(&io.input)?;
            let s = forward_map(sigma.as_atomic()?)?;
            emit(&io.out, &to_json(&s))
        }
        Command::Scatter(Scatter::Inv { io, solver }) => {
            let s: ScatteringData = read_json(&io.input)?;
            let solver = inverse_solvers().create(&solver)?;
            let sigma = inverse_map_with(solver.as_ref(), &s)?;
            emit(&io.out, &to_json(&FiniteMeasure::from(sigma)))
        }
        Command::Potential(PotentialCmd::Eval { io, points, source }) => {
            let xs = points.resolve()?;
            let input = read_potential_input(&io.input)?;
            let mut out = String::new();
            if source == "gram" {
                let s = match &input {
                    PotentialInput::Scattering(s) => s.clone(),
                    PotentialInput::Measure(sigma) => forward_map(sigma)?,
                };
                let g = GramEvaluator::new(&s);
                out.push_str("x,u,u1,u2,u3\n");
                for &x in &xs {
                    let j = g.evaluate(x)?;
                    let _ = writeln!(
                        out,
                        "{x:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                        j.u, j.u1, j.u2, j.u3
                    );
                }
            } else {
                let u = potential_sources().create(&source)?.build(&input)?;
                let mut order: Vec<usize> = (0..xs.len()).collect();
                order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
                let sorted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
                let us = u.sample(&sorted)?;
                let mut values = vec![0.0; xs.len()];
                for (&i, v) in order.iter().zip(us) {
                    values[i] = v;
                }
                out.push_str("x,u\n");
                for (x, v) in xs.iter().zip(values) {
                    let _ = writeln!(out, "{x:.16e},{v:.16e}");
                }
            }
            emit(&io.out, &out)
        }
        Command::Kdv(Kdv::Evolve { io, t }) => {
            let s: ScatteringData = read_json(&io.input)?;
            emit(&io.out, &to_json(&kdv_evolve(&s, t)))
        }
        Command::Kdv(Kdv::Residual { io, points, t }) => {
            let s: ScatteringData = read_json(&io.input)?;
            let xs = points.resolve()?;
            let mut out = String::from("x,t,residual\n");
            for &tt in &t {
                for &x in &xs {
                    let r = kdv_residual(&s, x, tt)?;
                    let _ = writeln!(out, "{x:.16e},{tt:.16e},{r:.16e}");
                }
            }
            emit(&io.out, &out)
        }
        Command::Mc(Mc::Logphi { io, points, mc }) => {
            let sigma: FiniteMeasure = read_json(&io.input)?;
            let xs = points.resolve()?;
            let est = estimate_log_phi(&sigma, &xs, &mc.config(&xs))?;
            emit(&io.out, &mc_csv(&xs, &est))
        }
        Command::Mc(Mc::Derivs { io, points, mc }) => {
            let sigma: FiniteMeasure = read_json(&io.input)?;
            let xs = points.resolve()?;
            let est = estimate_phi_derivatives(&sigma, &xs, &mc.config(&xs))?;
            let mut out = String::from("x,d1,d1_stderr,d2,d2_stderr,n_paths,seed\n");
            for (x, (a, b)) in xs.iter().zip(&est) {
                let _ = writeln!(
                    out,
                    "{x:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                    a.value, a.stderr, b.value, b.stderr, a.n_paths, a.seed
                );
            }
            emit(&io.out, &out)
        }
        Command::Mc(Mc::Negative { io, points, mc }) => {
            let sigma: FiniteMeasure = read_json(&io.input)?;
            let xs = points.resolve()?;
            let est = estimate_log_phi_negative(sigma.as_atomic()?, &xs, &mc.config(&xs))?;
            emit(&io.out, &mc_csv(&xs, &est))
        }
        Command::Mc(Mc::Moments { io, y, m, mc }) => {
            let spec: CompoundOUSpec = read_json(&io.input)?;
            spec.validate()?;
            let cfg = mc.config(&[y]);
            let reports = m
                .iter()
                .map(|&k| gaussian_moment_check(&spec, y, k, &cfg))
                .collect::<reflectionless::Result<Vec<_>>>()?;
            emit(&io.out, &to_json(&reports))
        }
        Command::Converge(args) => {
            let sigma: FiniteMeasure = read_json(&args.io.input)?;
            let xs = parse_grid(&args.grid)?;
            let sequence: Sequence = args.sequence.parse()?;
            let report = run_converge(
                &sigma,
                &args.schedule,
                &xs,
                &args.mode,
                sequence,
                &args.mc.config(&xs),
            )?;
            emit(&args.io.out, &to_json(&report))
        }
        Command::Spectrum(SpectrumCmd::Eigs {
            io,
            l,
            h,
            k,
            source,
        }) => {
            let u: Box<dyn Potential> = if io.input.extension().is_some_and(|e| e == "csv") {
                Box::new(SampledPotential::from_csv(&read_text(&io.input)?)?)
            } else {
                let input = read_potential_input(&io.input)?;
                potential_sources().create(&source)?.build(&input)?
            };
            let report = schrodinger_eigs(u.as_ref(), l, h, k)?;
            emit(&io.out, &to_json(&report))
        }
        Command::Spectrum(SpectrumCmd::Bound {
            io,
            schedule,
            eps,
            l,
            h,
        }) => {
            let sigma: FiniteMeasure = read_json(&io.input)?;
            let seq = schedule
                .iter()
                .map(|&n| sigma.discretize(n))
                .collect::<reflectionless::Result<Vec<AtomicMeasure>>>()?;
            let opts = BoundOptions {
                l,
                h,
                limit_mass: Some(sigma.total_mass()),
                ..BoundOptions::default()
            };
            let report = verify_spectral_bound(&seq, eps, &opts)?;
            emit(&io.out, &to_json(&report))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
