use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use nsentropy::continuous::{
    self, power_law_density, ConstraintSet, MultiplierSolution, Support, WeightFunction,
};
use nsentropy::corpus::{self, GammaGrid};
use nsentropy::discrete::{entropy_monotonicity_scan, hessian_check, solve_discrete_maxent};
use nsentropy::entropy::{nonsymmetric_entropy, shannon_entropy, WeightFamily, WeightVector};
use nsentropy::io::{self as nio, ContinuousProblem, DENSITY_TABLE_POINTS};
use nsentropy::oracle;
use nsentropy::Error;

#[derive(Parser)]
#[command(
    name = "nsentropy",
    version,
    about = "Nonsymmetric entropy and its maximum distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Entropy of a distribution under a weight vector.
    Entropy {
        #[arg(long, value_name = "PATH")]
        dist: PathBuf,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        csv: bool,
    },
    /// Closed-form maximizer over a finite alphabet.
    MaxentDiscrete {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        csv: bool,
    },
    /// Maximum-entropy density under optional moment constraints.
    MaxentContinuous {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long, default_value_t = DENSITY_TABLE_POINTS)]
        points: usize,
        #[arg(long)]
        csv: bool,
    },
    /// Normalized power law for beta(x) = x^alpha on (k, inf).
    Powerlaw {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        k: f64,
        #[arg(long, default_value_t = DENSITY_TABLE_POINTS)]
        points: usize,
        #[arg(long)]
        csv: bool,
    },
    /// Oracle checks of the closed forms and the maximum principle.
    Verify {
        check: Check,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 400)]
        resolution: usize,
    },
    /// Fit Zipf or Mandelbrot exponents to a text corpus.
    ZipfFit {
        /// Text file; standard input when omitted or `-`.
        input: Option<PathBuf>,
        #[arg(long)]
        max_rank: Option<usize>,
        /// Fit the Mandelbrot shift over this grid.
        #[arg(long, value_name = "START:STOP:STEP")]
        gamma_grid: Option<String>,
    },
    /// Rank-frequency table of a text corpus.
    Rankfreq {
        /// Text file; standard input when omitted or `-`.
        input: Option<PathBuf>,
        #[arg(long)]
        max_rank: Option<usize>,
        #[arg(long)]
        csv: bool,
    },
    /// Tab-separated `x rho` samples of a solved density.
    Tabulate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        weights: WeightArgs,
        /// Power-law exponent; tabulates the power law instead of a problem.
        #[arg(long, requires = "k", conflicts_with_all = ["problem", "weights_expr", "support"])]
        alpha: Option<f64>,
        #[arg(long, requires = "alpha")]
        k: Option<f64>,
        #[arg(long, default_value_t = DENSITY_TABLE_POINTS)]
        points: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    /// Closed-form maximizer against grid search and projected-gradient ascent.
    Theorem2,
    /// Maximum principle: sampled competitors never beat the maximizer and
    /// share its cross term. Continuous when a problem is given.
    Theorem4,
    /// Maximum entropy strictly increases with the alphabet size.
    Corollary1,
    /// Analytic gradient against central differences.
    Gradient,
}

#[derive(Args)]
struct WeightArgs {
    /// `index,weight` CSV file.
    #[arg(long, value_name = "PATH", conflicts_with = "weights_expr")]
    weights_file: Option<PathBuf>,
    /// `const:c=<c>`, `power:alpha=<a>` or `mandelbrot:alpha=<a>,gamma=<g>`.
    #[arg(long, value_name = "EXPR")]
    weights_expr: Option<String>,
    /// Alphabet size for --weights-expr.
    #[arg(short = 'm', value_name = "INT")]
    m: Option<usize>,
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem JSON file; `-` reads standard input.
    #[arg(value_name = "PROBLEM", conflicts_with_all = ["support", "mean", "second_moment"])]
    problem: Option<PathBuf>,
    /// Support `a,b`; either end may be `inf` or `-inf`.
    #[arg(long, value_name = "A,B", allow_hyphen_values = true)]
    support: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mean: Option<f64>,
    #[arg(long, requires = "mean")]
    second_moment: Option<f64>,
}

enum Failure {
    Usage(String),
    Library(Error),
    CheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Library(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

/// Malformed flag values are usage errors; well-formed but out-of-domain
/// values keep their library error.
fn flag_error(flag: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| match e {
        Error::Input(msg) => Failure::Usage(format!("{flag}: {msg}")),
        other => Failure::Library(other),
    }
}

fn read_input(path: Option<&Path>) -> Outcome<Vec<u8>> {
    match path {
        None => read_stdin(),
        Some(p) if p == Path::new("-") => read_stdin(),
        Some(p) => fs::read(p).map_err(|e| {
            Failure::Library(Error::Input(format!("cannot read {}: {e}", p.display())))
        }),
    }
}

fn read_stdin() -> Outcome<Vec<u8>> {
    let mut buf = Vec::new();
    io::stdin().read_to_end(&mut buf).map_err(Error::from)?;
    Ok(buf)
}

fn open(path: &Path) -> Outcome<fs::File> {
    fs::File::open(path)
        .map_err(|e| Failure::Library(Error::Input(format!("cannot open {}: {e}", path.display()))))
}

impl WeightArgs {
    fn family(&self) -> Outcome<Option<WeightFamily>> {
        self.weights_expr
            .as_deref()
            .map(str::parse)
            .transpose()
            .map_err(flag_error("--weights-expr"))
    }

    /// Weights from the file or the expression; `default_m` fills in a
    /// missing `-m` for expressions.
    fn resolve(&self, default_m: Option<usize>) -> Outcome<WeightVector> {
        if let Some(path) = &self.weights_file {
            let w = nio::read_weights_csv(open(path)?)?;
            if let Some(m) = self.m {
                if m != w.len() {
                    return Err(Error::Dimension {
                        expected: m,
                        found: w.len(),
                    }
                    .into());
                }
            }
            return Ok(w);
        }
        match self.family()? {
            Some(family) => match self.m.or(default_m) {
                Some(m) => Ok(family.materialize(m)?),
                None => usage("--weights-expr needs -m <int>"),
            },
            None => usage("one of --weights-file or --weights-expr is required"),
        }
    }
}

impl ProblemArgs {
    fn resolve(&self, weights: &WeightArgs) -> Outcome<ContinuousProblem> {
        if let Some(path) = &self.problem {
            if weights.weights_expr.is_some() {
                return usage("a problem file already names beta; drop --weights-expr");
            }
            let text = read_input(Some(path))?;
            let text = String::from_utf8(text)
                .map_err(|_| Error::Input("problem file is not UTF-8".into()))?;
            return Ok(ContinuousProblem::from_json(&text)?);
        }
        let Some(support) = &self.support else {
            return usage("give a problem file or --support with --weights-expr");
        };
        let Some(family) = weights.family()? else {
            return usage("--support needs --weights-expr for beta");
        };
        let support: Support = support.parse().map_err(flag_error("--support"))?;
        let constraints = ConstraintSet {
            mean: self.mean,
            second_moment: self.second_moment,
        };
        Ok(ContinuousProblem {
            beta: WeightFunction::from_family(family, support)?,
            constraints,
        })
    }

    fn given(&self) -> bool {
        self.problem.is_some() || self.support.is_some()
    }
}

fn emit(value: &Value) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    writeln!(io::stdout(), "{text}").map_err(Error::from)?;
    Ok(())
}

fn emit_text(text: &str) -> Outcome<()> {
    io::stdout()
        .write_all(text.as_bytes())
        .map_err(Error::from)?;
    Ok(())
}

fn density_csv(solution: &MultiplierSolution, points: usize) -> String {
    let mut out = String::from("x,rho\n");
    for (x, rho) in solution.density_table(points) {
        out.push_str(&format!("{x:?},{rho:?}\n"));
    }
    out
}

fn seed(seed: Option<u64>, check: &str) -> Outcome<u64> {
    match seed {
        Some(s) => Ok(s),
        None => usage(format!(
            "verify {check} is stochastic and needs --seed <int>"
        )),
    }
}

fn report(check: &str, pass: bool, metrics: Value) -> Outcome<()> {
    emit(&json!({
        "check": check,
        "status": if pass { "pass" } else { "fail" },
        "metrics": metrics,
    }))?;
    if pass {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

fn verify(
    check: Check,
    weights: &WeightArgs,
    problem: &ProblemArgs,
    trials: Option<usize>,
    seed_flag: Option<u64>,
    resolution: usize,
) -> Outcome<()> {
    match check {
        Check::Theorem2 => {
            let w = weights.resolve(None)?;
            let solution = solve_discrete_maxent(&w)?;
            let grid = oracle::grid_search_maxent(&w, resolution)?;
            let ascent = oracle::projected_gradient_maxent(&w, 1e-10)?;
            let pg_distance = ascent.best_point.max_abs_diff(&solution.maximizer);
            let entropy_error =
                (nonsymmetric_entropy(&solution.maximizer, &w)? - w.reciprocal_sum().ln()).abs();
            let pass = grid.gap >= -1e-9 && pg_distance <= 1e-6 && entropy_error <= 1e-12;
            report(
                "theorem2",
                pass,
                json!({
                    "m": w.len(),
                    "resolution": resolution,
                    "grid_gap": grid.gap,
                    "grid_evaluations": grid.evaluations,
                    "projected_gradient_distance": pg_distance,
                    "max_entropy_error": entropy_error,
                }),
            )
        }
        Check::Theorem4 if problem.given() => {
            let seed = seed(seed_flag, "theorem4")?;
            let p = problem.resolve(weights)?;
            let solution = continuous::solve(&p.beta, p.constraints)?;
            let count = trials.unwrap_or(50);
            let r = oracle::maximum_principle_check_continuous(&solution, count, seed)?;
            report(
                "theorem4",
                r.max_violation <= 1e-7 && r.constancy_spread <= 1e-6,
                json!({
                    "densities": count,
                    "reference_entropy": r.reference_entropy,
                    "max_violation": r.max_violation,
                    "constancy_spread": r.constancy_spread,
                }),
            )
        }
        Check::Theorem4 => {
            let seed = seed(seed_flag, "theorem4")?;
            let w = weights.resolve(None)?;
            let count = trials.unwrap_or(1000);
            let r = oracle::maximum_principle_check_discrete(&w, count, seed)?;
            report(
                "theorem4",
                r.max_violation <= 1e-12 && r.constancy_spread <= 1e-12,
                json!({
                    "trials": count,
                    "max_violation": r.max_violation,
                    "constancy_spread": r.constancy_spread,
                    "cross_term": r.cross_term,
                }),
            )
        }
        Check::Corollary1 => {
            let Some(family) = weights.family()? else {
                return usage("verify corollary1 needs --weights-expr");
            };
            let Some(m_max) = weights.m else {
                return usage("verify corollary1 needs -m <int> as the largest alphabet");
            };
            let scan = entropy_monotonicity_scan(&family, m_max)?;
            let min_increment = scan
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            report(
                "corollary1",
                scan.len() < 2 || min_increment > 0.0,
                json!({
                    "m_max": m_max,
                    "min_increment": if scan.len() < 2 { Value::Null } else { json!(min_increment) },
                    "max_entropy_at_m_max": scan.last(),
                }),
            )
        }
        Check::Gradient => {
            let seed = seed(seed_flag, "gradient")?;
            let w = weights.resolve(None)?;
            let points = trials.unwrap_or(100);
            let r = oracle::gradient_check(&w, points, seed)?;
            report(
                "gradient",
                r.max_relative_error <= 1e-5,
                json!({ "points": points, "max_relative_error": r.max_relative_error }),
            )
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Entropy { dist, weights, csv } => {
            let p = nio::read_distribution_csv(open(&dist)?)?;
            let w = if weights.weights_file.is_none() && weights.weights_expr.is_none() {
                WeightVector::ones(p.len())?
            } else {
                weights.resolve(Some(p.len()))?
            };
            let s = nonsymmetric_entropy(&p, &w)?;
            if csv {
                emit_text(&format!(
                    "entropy,shannon\n{s:?},{:?}\n",
                    shannon_entropy(&p)
                ))
            } else {
                emit(&json!({ "m": p.len(), "entropy": s, "shannon": shannon_entropy(&p) }))
            }
        }
        Command::MaxentDiscrete { weights, csv } => {
            let w = weights.resolve(None)?;
            let solution = solve_discrete_maxent(&w)?;
            if csv {
                return emit_text(&nio::distribution_csv(&solution.maximizer));
            }
            let hessian = if w.len() >= 2 {
                Some(hessian_check(&solution.maximizer)?)
            } else {
                None
            };
            emit(&nio::discrete_solution_json(&solution, hessian.as_ref()))
        }
        Command::MaxentContinuous {
            problem,
            weights,
            points,
            csv,
        } => {
            let p = problem.resolve(&weights)?;
            solve_and_emit(&p, points, csv)
        }
        Command::Powerlaw {
            alpha,
            k,
            points,
            csv,
        } => {
            let solution = power_law_density(alpha, k)?;
            if csv {
                emit_text(&density_csv(&solution, points))
            } else {
                emit(&nio::continuous_solution_json(&solution, points))
            }
        }
        Command::Verify {
            check,
            weights,
            problem,
            trials,
            seed,
            resolution,
        } => verify(check, &weights, &problem, trials, seed, resolution),
        Command::ZipfFit {
            input,
            max_rank,
            gamma_grid,
        } => {
            let tokens = corpus::tokenize(&read_input(input.as_deref())?, 1)?;
            let table = corpus::rank_frequency(&tokens)?;
            let fit = match gamma_grid {
                Some(grid) => {
                    let grid: GammaGrid = grid.parse().map_err(flag_error("--gamma-grid"))?;
                    let table = match max_rank {
                        Some(r) => corpus::RankFrequencyTable::from_counts(
                            &table.counts()[..r.min(table.len())],
                        )?,
                        None => table,
                    };
                    corpus::fit_mandelbrot(&table, &grid)?
                }
                None => corpus::fit_zipf(&table, max_rank)?,
            };
            emit(&nio::fit_json(&fit))
        }
        Command::Rankfreq {
            input,
            max_rank,
            csv,
        } => {
            let tokens = corpus::tokenize(&read_input(input.as_deref())?, 1)?;
            let table = corpus::rank_frequency(&tokens)?;
            let n = max_rank.unwrap_or(table.len()).min(table.len());
            let entries = &table.entries()[..n];
            if csv {
                let mut out = String::from("rank,token,count\n");
                let full = table.to_csv()?;
                out.extend(full.lines().skip(1).take(n).map(|l| format!("{l}\n")));
                emit_text(&out)
            } else {
                emit(
                    &json!({ "total": table.total(), "distinct": table.len(), "entries": entries }),
                )
            }
        }
        Command::Tabulate {
            problem,
            weights,
            alpha,
            k,
            points,
        } => {
            let solution = match (alpha, k) {
                (Some(alpha), Some(k)) => power_law_density(alpha, k)?,
                _ => {
                    let p = problem.resolve(&weights)?;
                    continuous::solve(&p.beta, p.constraints)?
                }
            };
            let mut out = String::new();
            for (x, rho) in solution.density_table(points) {
                out.push_str(&format!("{x:?}\t{rho:?}\n"));
            }
            emit_text(&out)
        }
    }
}

fn solve_and_emit(p: &ContinuousProblem, points: usize, csv: bool) -> Outcome<()> {
    let solution = continuous::solve(&p.beta, p.constraints)?;
    if csv {
        emit_text(&density_csv(&solution, points))
    } else {
        emit(&nio::continuous_solution_json(&solution, points))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::CheckFailed) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Library(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
