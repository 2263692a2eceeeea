use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semistab::data::DataSet;
use semistab::discbounds::{degree_cap, fontaine_joshi_bound, division_field_table};
use semistab::exactnum::{factor_u64, fmt_rat, is_prime, parse_rat};
use semistab::exclusion::{Engine, Rule, RuleSet, Scenario, Verdict};
use semistab::ramification::{herbrand_phi, herbrand_psi, Filtration};
use semistab::symplectic::{lagrangian_count_formula, SympSpace};
use semistab::tate::{fuzz_isogenies, InertiaModule, KernelStrategy};

/// Default seed for randomized commands.
const DEFAULT_SEED: u64 = 20240601;

#[derive(Parser)]
#[command(name = "semistab", version, about = "Exact checks for semistable abelian varieties with one bad prime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Root-discriminant bounds and degree caps for the six (l, p) pairs.
    #[command(name = "table1")]
    Table,
    /// Root-discriminant bound and degree cap for one division field.
    Bound {
        #[arg(long)]
        ell: u64,
        #[arg(long)]
        p: u64,
        #[arg(long, default_value_t = 1)]
        n: u32,
        /// Effective stage of the bad prime.
        #[arg(long, default_value_t = 1)]
        stage: u32,
    },
    /// Case analysis bounding the l-division field.
    Exclude {
        #[arg(long)]
        ell: u64,
        #[arg(long)]
        p: u64,
        /// Write the text trace here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the trace as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Disable a rule by name (repeatable).
        #[arg(long = "disable", value_name = "RULE")]
        disabled: Vec<String>,
    },
    /// Non-existence argument for one bad prime p <= 7.
    #[command(name = "theorem42")]
    SingleBadPrime {
        #[arg(long)]
        p: u64,
    },
    /// Gate for a nilpotent 2-division field.
    #[command(name = "prop43")]
    NilpotentGate {
        #[arg(long)]
        p: u64,
    },
    /// Herbrand function of a ramification filtration.
    Herbrand {
        /// Orders g0,g1,... of the lower ramification groups.
        #[arg(long, value_delimiter = ',', required = true)]
        orders: Vec<u64>,
        /// Rational point u >= 0.
        #[arg(long)]
        eval: String,
        /// Evaluate the inverse function instead.
        #[arg(long)]
        inverse: bool,
        /// Residue characteristic; inferred from g1 when omitted. Only the
        /// shape of the profile is checked.
        #[arg(long = "char")]
        residue_char: Option<u64>,
    },
    /// Lagrangian subspaces of the standard symplectic space of dimension 2n over F_q.
    Symplectic {
        #[arg(long)]
        q: u64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count_only: bool,
    },
    /// Isogeny tower on a random inertia module.
    Tower {
        #[arg(long)]
        ell: u64,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        a: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Strategy::FlagM1)]
        strategy: Strategy,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Random isogenies checked against the component-group identity and the lattice diagram.
    #[command(name = "lemma24-fuzz")]
    IsogenyFuzz {
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    FlagM1,
    FlagM2,
}

/// A failed command: `Usage` exits 2, `Verify` exits 1.
enum Failure {
    Usage(String),
    Verify(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

type Outcome = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Verify(out)) => {
            print!("{out}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load() -> Result<DataSet, Failure> {
    DataSet::load().map_err(usage)
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Table => cmd_table(),
        Command::Bound { ell, p, n, stage } => cmd_bound(ell, p, n, stage),
        Command::Exclude { ell, p, out, json, disabled } => cmd_exclude(ell, p, out, json, &disabled),
        Command::SingleBadPrime { p } => cmd_single_bad_prime(p),
        Command::NilpotentGate { p } => cmd_nilpotent_gate(p),
        Command::Herbrand { orders, eval, inverse, residue_char } => {
            cmd_herbrand(orders, &eval, inverse, residue_char)
        }
        Command::Symplectic { q, n, count_only } => cmd_symplectic(q, n, count_only),
        Command::Tower { ell, t, a, steps, strategy, seed } => cmd_tower(ell, t, a, steps, strategy, seed),
        Command::IsogenyFuzz { iters, seed } => cmd_fuzz(iters, seed),
    }
}

fn cmd_table() -> Outcome {
    let data = load()?;
    let rows = division_field_table(&data.table).map_err(usage)?;
    let mut out = String::new();
    for r in rows {
        writeln!(
            out,
            "l={} p={} rd<{} ≈ {} degree-cap={}",
            r.ell,
            r.bad[0].0,
            r.bound,
            r.bound.to_decimal(4),
            r.degree_cap
        )
        .unwrap();
    }
    Ok(out)
}

fn cmd_bound(ell: u64, p: u64, n: u32, stage: u32) -> Outcome {
    let data = load()?;
    let bound = fontaine_joshi_bound(ell, n, &[(p, stage)]).map_err(usage)?;
    let cap = degree_cap(&data.table, &bound).map_err(usage)?;
    Ok(format!("rd<{bound} ≈ {}\ndegree-cap={cap}\n", bound.to_decimal(4)))
}

fn cmd_exclude(ell: u64, p: u64, out: Option<PathBuf>, json: Option<PathBuf>, disabled: &[String]) -> Outcome {
    let mut rules = RuleSet::all();
    for name in disabled {
        rules.disable(Rule::from_name(name).ok_or_else(|| usage(format!("unknown rule {name:?}")))?);
    }
    let engine = Engine::new(load()?, rules);
    let (verdict, trace) = engine.run(&Scenario::new(ell, p)).map_err(usage)?;
    let replay = engine.replay(&trace);
    let mut text = trace.to_text();
    if let Err(e) = &replay {
        writeln!(text, "REPLAY FAILED {e}").unwrap();
    }
    writeln!(text, "{verdict}").unwrap();
    if let Some(path) = json {
        std::fs::write(&path, trace.to_json()).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    let shown = match out {
        Some(path) => {
            std::fs::write(&path, &text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            format!("{verdict}\n")
        }
        None => text,
    };
    if replay.is_err() || !matches!(verdict, Verdict::Contained(_)) {
        return Err(Failure::Verify(shown));
    }
    Ok(shown)
}

fn cmd_single_bad_prime(p: u64) -> Outcome {
    let engine = Engine::new(load()?, RuleSet::all());
    let ell = Engine::auxiliary_prime(p).map_err(usage)?;
    let trace = engine.single_bad_prime(p).map_err(|e| Failure::Verify(format!("{e}\n")))?;
    let mut text = trace.to_text();
    match engine.replay(&trace) {
        Ok(()) => {
            writeln!(text, "NONEXISTENT p={p} l={ell}").unwrap();
            Ok(text)
        }
        Err(e) => {
            writeln!(text, "REPLAY FAILED {e}").unwrap();
            Err(Failure::Verify(text))
        }
    }
}

fn cmd_nilpotent_gate(p: u64) -> Outcome {
    let engine = Engine::new(load()?, RuleSet::all());
    let (conclusion, trace) = engine.nilpotent_gate(p).map_err(usage)?;
    let mut text = trace.to_text();
    match engine.replay(&trace) {
        Ok(()) => {
            writeln!(text, "{conclusion}").unwrap();
            Ok(text)
        }
        Err(e) => {
            writeln!(text, "REPLAY FAILED {e}").unwrap();
            Err(Failure::Verify(text))
        }
    }
}

fn infer_char(orders: &[u64]) -> Option<u64> {
    let g0 = *orders.first()?;
    match orders.get(1) {
        Some(&g1) if g1 > 1 => factor_u64(g1).first().map(|&(q, _)| q),
        _ => (2..).find(|&q| is_prime(q) && g0 % q != 0),
    }
}

fn cmd_herbrand(orders: Vec<u64>, eval: &str, inverse: bool, residue_char: Option<u64>) -> Outcome {
    let x = parse_rat(eval).map_err(usage)?;
    let p = residue_char.or_else(|| infer_char(&orders)).ok_or_else(|| usage("empty order list"))?;
    let f = Filtration::relaxed(p, orders).map_err(usage)?;
    let y = if inverse { herbrand_psi(&f, &x) } else { herbrand_phi(&f, &x) }.map_err(usage)?;
    Ok(format!("{}\n", fmt_rat(&y)))
}

fn cmd_symplectic(q: u64, n: usize, count_only: bool) -> Outcome {
    let space = SympSpace::standard(q, n).map_err(usage)?;
    let all = space.enumerate_lagrangians().map_err(usage)?;
    let expected = lagrangian_count_formula(q, n as u32);
    let mut out = String::new();
    if !count_only {
        for w in &all {
            let rows: Vec<String> = w
                .basis()
                .iter()
                .map(|r| r.iter().map(u16::to_string).collect::<Vec<_>>().join(" "))
                .collect();
            writeln!(out, "[{}]", rows.join("; ")).unwrap();
        }
    }
    writeln!(out, "count={} formula={expected}", all.len()).unwrap();
    if all.len() as u128 != expected {
        return Err(Failure::Verify(out));
    }
    Ok(out)
}

fn cmd_tower(ell: u64, t: usize, a: usize, steps: usize, strategy: Strategy, seed: u64) -> Outcome {
    if !is_prime(ell) || t == 0 {
        return Err(usage("need prime l and t >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let module = InertiaModule::random(&mut rng, ell, t, a, 0);
    let strat = match strategy {
        Strategy::FlagM1 => KernelStrategy::FlagM1,
        Strategy::FlagM2 => KernelStrategy::FlagM2,
    };
    let run = module.tower(steps, &strat).map_err(|e| Failure::Verify(format!("{e}\n")))?;
    let mut out = String::new();
    writeln!(out, "# {}", run.assumption).unwrap();
    for (k, (stage, comp)) in run.steps.iter().enumerate() {
        writeln!(out, "step {k}: stage {stage} component-order {comp}").unwrap();
    }
    let exact = run
        .steps
        .windows(2)
        .all(|w| w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + t as u64);
    if matches!(strategy, Strategy::FlagM1) && !exact {
        writeln!(out, "FAIL stage or component growth is not exact").unwrap();
        return Err(Failure::Verify(out));
    }
    writeln!(out, "OK").unwrap();
    Ok(out)
}

fn cmd_fuzz(iters: usize, seed: u64) -> Outcome {
    let r = fuzz_isogenies(seed, iters).map_err(|e| Failure::Verify(format!("{e}\n")))?;
    let mut out = String::new();
    writeln!(out, "iterations {}", r.iterations).unwrap();
    writeln!(out, "component identity failures {}", r.lemma_failures).unwrap();
    writeln!(out, "diagram failures {}", r.diagram_failures).unwrap();
    writeln!(out, "form failures {}", r.form_failures).unwrap();
    writeln!(out, "monotone {}/{} ok", r.monotone_checked - r.monotone_failures, r.monotone_checked).unwrap();
    writeln!(out, "increment {}/{} ok", r.increment_checked - r.increment_failures, r.increment_checked).unwrap();
    if r.passed() {
        writeln!(out, "OK").unwrap();
        Ok(out)
    } else {
        writeln!(out, "FAIL").unwrap();
        Err(Failure::Verify(out))
    }
}
