use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use schwarzian::cocycles::{bol, schwarzian, CocycleFamily, CocycleTag};
use schwarzian::expr::{parse, Diffeo, Expr};
use schwarzian::invariants::{
    is_resonant, row_proportionality, solve_invariant_pairing, symbol_alpha, transvectant, PairingSolution, SymbolMap,
};
use schwarzian::modules::{apply_op, Density, LinDiffOp};
use schwarzian::suites::{parse_samples, run_suite, ConfigFile, RunConfig};
use schwarzian::{Error, Scalar};

#[derive(Parser)]
#[command(
    name = "schwarzian",
    version,
    about = "Schwarzian derivative, its operator cocycles and their invariance checks"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Jet order
    #[arg(long, global = true)]
    order: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated rationals, e.g. "-2,1/5,1"
    #[arg(long, global = true, allow_hyphen_values = true)]
    samples: Option<String>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Record elapsed time in reports
    #[arg(long, global = true)]
    timing: bool,
    /// TOML file with defaults for the flags above
    #[arg(long, global = true, env = "SCHWARZIAN_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one operation at a point
    Eval {
        #[command(subcommand)]
        what: Eval,
    },
    /// Run a verification suite, or `all`
    Verify {
        suite: String,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
    },
    /// Solve for the invariant pairing of order m on F_λ ⊗ F_{-1}
    SolvePairing {
        #[arg(long)]
        m: usize,
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
        /// Require vanishing on sl(2)
        #[arg(long)]
        vanish: bool,
    },
    /// Print the equivariant symbol coefficients α_i^j
    Symbol {
        #[arg(long)]
        k: usize,
        #[arg(long, allow_hyphen_values = true)]
        nu: String,
        #[arg(long, allow_hyphen_values = true)]
        rho: String,
    },
}

#[derive(Subcommand)]
enum Eval {
    /// S(f) at a point
    Schwarzian {
        #[arg(long)]
        f: String,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
    /// Coefficients of a cocycle family C(f)
    Cocycle {
        /// S, T, U, V0, V-4, LOG0 or LOG1
        #[arg(long, allow_hyphen_values = true)]
        family: String,
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        lambda: String,
        #[arg(long)]
        f: String,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
    /// Transvectant J_m(φ, ψ) at a point
    Transvectant {
        #[arg(long)]
        m: usize,
        #[arg(long, allow_hyphen_values = true)]
        l1: String,
        #[arg(long, allow_hyphen_values = true)]
        l2: String,
        #[arg(long, allow_hyphen_values = true)]
        phi: String,
        #[arg(long, allow_hyphen_values = true)]
        psi: String,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
    /// Bol operator ∂^k applied to φ
    Bol {
        #[arg(long)]
        k: usize,
        #[arg(long, allow_hyphen_values = true)]
        phi: String,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
    /// Symbol of the operator Σ a_j ∂^j (give --coeff a_0 --coeff a_1 ...)
    Symbol {
        #[arg(long, allow_hyphen_values = true)]
        nu: String,
        #[arg(long, allow_hyphen_values = true)]
        rho: String,
        #[arg(long = "coeff", allow_hyphen_values = true, required = true)]
        coeffs: Vec<String>,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
}

enum Failure {
    Usage(Error),
    Domain(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::Config(_) | Error::UnknownSuite(_) => Failure::Usage(e),
            _ => Failure::Domain(e),
        }
    }
}

fn num(s: &str) -> Result<Scalar, Failure> {
    s.parse::<Scalar>().map_err(Failure::Usage)
}

fn expr(s: &str) -> Result<Expr, Failure> {
    parse(s).map_err(Failure::Usage)
}

fn diffeo(s: &str) -> Result<Diffeo, Failure> {
    Diffeo::parse(s).map_err(Failure::Usage)
}

struct Output {
    format: Format,
}

impl Output {
    fn values(&self, command: &str, rows: Vec<(String, Scalar)>) {
        match self.format {
            Format::Text if rows.len() == 1 => println!("{}", rows[0].1),
            Format::Text => {
                for (k, v) in rows {
                    println!("{k} = {v}");
                }
            }
            Format::Json => {
                let map: serde_json::Map<String, serde_json::Value> =
                    rows.into_iter().map(|(k, v)| (k, json!(v.to_string()))).collect();
                println!("{}", serde_json::to_string_pretty(&json!({ "command": command, "values": map })).unwrap());
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = cli.global;
    let file = match &g.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut cfg = RunConfig::default();
    file.apply(&mut cfg)?;
    if let Some(o) = g.order {
        cfg.order = o;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(s) = &g.samples {
        cfg.samples = parse_samples(s).map_err(Failure::Usage)?;
    }
    if let Some(t) = g.trials {
        cfg.trials = t;
    }
    let format = match (g.format, file.format.as_deref()) {
        (Some(f), _) => f,
        (None, Some("json")) => Format::Json,
        (None, Some("text") | None) => Format::Text,
        (None, Some(other)) => return Err(Failure::Usage(Error::Config(format!("unknown format `{other}`")))),
    };
    let out = Output { format };

    match cli.command {
        Command::Eval { what } => match what {
            Eval::Schwarzian { f, at } => {
                let s = schwarzian(&diffeo(&f)?, &num(&at)?, 0)?;
                out.values("schwarzian", vec![("S".into(), s.value().clone())]);
            }
            Eval::Cocycle { family, lambda, f, at } => {
                let tag: CocycleTag = family.parse().map_err(Failure::Usage)?;
                let fam = CocycleFamily::new(tag, num(&lambda)?);
                let c = fam.evaluate(&diffeo(&f)?, &num(&at)?, 0)?;
                let rows = c.coeffs.iter().enumerate().map(|(i, j)| (format!("a{i}"), j.value().clone())).collect();
                out.values(&fam.to_string(), rows);
            }
            Eval::Transvectant { m, l1, l2, phi, psi, at } => {
                let j = transvectant(m, &num(&l1)?, &num(&l2)?);
                let v = j.apply(&expr(&phi)?, &expr(&psi)?, &num(&at)?, 0)?;
                out.values("transvectant", vec![(format!("J{m}"), v.value().clone())]);
            }
            Eval::Bol { k, phi, at } => {
                let d = Density::new(Scalar::ratio(1 - k as i64, 2), expr(&phi)?);
                let v = apply_op(&bol(k), &d, &num(&at)?, 0)?;
                out.values("bol", vec![(format!("bol{k}"), v.value().clone())]);
            }
            Eval::Symbol { nu, rho, coeffs, at } => {
                let (nu, rho) = (num(&nu)?, num(&rho)?);
                let k = coeffs.len() - 1;
                let a = coeffs.iter().map(|c| expr(c)).collect::<Result<Vec<_>, _>>()?;
                let op = LinDiffOp::new(nu.clone(), rho.clone(), a)?;
                let sm = SymbolMap::new(k, nu, rho)?;
                let t = sm.apply(&op.jets_at(&num(&at)?, k)?)?;
                let rows = t.slots.iter().enumerate().map(|(i, j)| (format!("abar{i}"), j.value().clone())).collect();
                out.values("symbol", rows);
            }
        },
        Command::Verify { suite, lambda } => {
            if let Some(l) = lambda {
                cfg.lambda = Some(num(&l)?);
            }
            let workers = g.workers.or(file.workers).unwrap_or(0);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Failure::Usage(Error::Config(e.to_string())))?;
            let report = pool.install(|| run_suite(&suite, &cfg, g.timing))?;
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", report.to_json()),
            }
            if !report.passed() {
                return Err(Failure::Checks);
            }
        }
        Command::SolvePairing { m, lambda, vanish } => {
            let l = num(&lambda)?;
            let sol = solve_invariant_pairing(m, &l, vanish)?;
            match format {
                Format::Text => println!("{sol}"),
                Format::Json => {
                    let body = match &sol {
                        PairingSolution::Unique(p) => json!({
                            "m": m, "lambda": l.to_string(), "unique": true,
                            "coeffs": p.coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                            "listing": sol.to_string(),
                        }),
                        PairingSolution::None => json!({ "m": m, "lambda": l.to_string(), "dimension": 0 }),
                        PairingSolution::Dimension(d) => json!({ "m": m, "lambda": l.to_string(), "dimension": d }),
                    };
                    println!("{}", serde_json::to_string_pretty(&body).unwrap());
                }
            }
        }
        Command::Symbol { k, nu, rho } => {
            let (nu, rho) = (num(&nu)?, num(&rho)?);
            let delta = &rho - &nu;
            if is_resonant(k, &delta) {
                return Err(Failure::Domain(Error::Resonance(format!("ρ - ν = {delta} for k = {k}"))));
            }
            let sm = SymbolMap::new(k, nu.clone(), rho.clone())?;
            let rows = if sm.alpha.iter().all(|r| r.iter().all(Scalar::is_exact)) {
                Some(row_proportionality(&symbol_alpha(k, &nu, &rho)?, &sm.alpha))
            } else {
                None
            };
            match format {
                Format::Text => {
                    for (i, row) in sm.alpha.iter().enumerate() {
                        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
                        println!("row {i}: {}", cells.join("  "));
                    }
                    if let Some(r) = &rows {
                        let f: Vec<String> =
                            r.iter().map(|x| x.as_ref().map_or("-".into(), |c| c.to_string())).collect();
                        println!("binomial formula / solved, per row: {}", f.join("  "));
                    }
                }
                Format::Json => {
                    let alpha: Vec<Vec<String>> =
                        sm.alpha.iter().map(|r| r.iter().map(|c| c.to_string()).collect()).collect();
                    let body = json!({ "k": k, "nu": nu.to_string(), "rho": rho.to_string(), "alpha": alpha });
                    println!("{}", serde_json::to_string_pretty(&body).unwrap());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
