//! Scripted case analyses that bound the ℓ-division field `L` of a
//! semistable abelian variety with one bad prime `p`, and the two gates
//! built on them. Every branch is closed by a named rule whose side
//! conditions are computed, and each application is recorded as a
//! replayable trace step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cft::{
    abelian_layer, base_cyclotomic, quadratic_class_number, splitting_in_cyclotomic, AxiomValue,
    CftError, FieldTag,
};
use crate::data::DataSet;
use crate::discbounds::{fontaine_joshi_bound, known_field_rd, max_degree, DiscError};
use crate::exactnum::{factor_u64, Factorization};
use crate::groups::{sylow_admissible_counts, GroupError};
use crate::ramification::{cyclotomic_cap, RamificationError};
use crate::tate::{InertiaModule, KernelStrategy, TateError};

#[derive(Debug, Error)]
pub enum ExclusionError {
    #[error("out of scope: {0}")]
    Scope(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("case analysis left open branches: {}", .0.join("; "))]
    Open(Vec<String>),
    #[error("rule {0} is disabled")]
    Disabled(Rule),
    #[error(transparent)]
    Cft(#[from] CftError),
    #[error(transparent)]
    Disc(#[from] DiscError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Ramification(#[from] RamificationError),
    #[error(transparent)]
    Tate(#[from] TateError),
}

type Result<T> = std::result::Result<T, ExclusionError>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CitationError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Anchors and their statements, read from `<anchor>|<statement>` lines.
#[derive(Clone, Debug, Default)]
pub struct Citations {
    raw: String,
    entries: BTreeMap<String, String>,
}

impl Citations {
    pub fn parse(text: &str) -> std::result::Result<Citations, CitationError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| CitationError::Syntax { line: idx + 1, msg: msg.to_string() };
            let (anchor, statement) = line.split_once('|').ok_or_else(|| err("missing '|'"))?;
            let (anchor, statement) = (anchor.trim(), statement.trim());
            if anchor.is_empty() || statement.is_empty() {
                return Err(err("empty anchor or statement"));
            }
            if entries.insert(anchor.to_string(), statement.to_string()).is_some() {
                return Err(err("duplicate anchor"));
            }
        }
        Ok(Citations { raw: text.to_string(), entries })
    }

    pub fn get(&self, anchor: &str) -> Option<&str> {
        self.entries.get(anchor).map(String::as_str)
    }

    /// Literal substring test against the whole citation file.
    pub fn mentions(&self, anchor: &str) -> bool {
        !anchor.is_empty() && self.raw.contains(anchor)
    }

    pub fn anchors(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    DegreeCap,
    Solvable,
    AbelianLayer,
    PrimeSquareQuotient,
    SylowCount,
    OrderTwoQuotient,
    WildInertiaNormal,
    OddClassNumber,
    UnramifiedDiscriminant,
    KroneckerWeberCap,
    TameResidue,
    NoCubicOverSqrtMinus3,
    ClassNumberOne,
    NoGoodReductionEverywhere,
    MaximalStage,
    Containment,
    OnePrimeAboveP,
    StageTower,
    MaximalityContradiction,
    NilpotentTwoGroup,
    InertInGaussian,
}

impl Rule {
    /// Rules used by the containment case analyses.
    pub const CASE_RULES: [Rule; 13] = [
        Rule::DegreeCap,
        Rule::Solvable,
        Rule::AbelianLayer,
        Rule::PrimeSquareQuotient,
        Rule::SylowCount,
        Rule::OrderTwoQuotient,
        Rule::WildInertiaNormal,
        Rule::OddClassNumber,
        Rule::UnramifiedDiscriminant,
        Rule::KroneckerWeberCap,
        Rule::TameResidue,
        Rule::NoCubicOverSqrtMinus3,
        Rule::ClassNumberOne,
    ];

    pub const ALL: [Rule; 21] = [
        Rule::DegreeCap,
        Rule::Solvable,
        Rule::AbelianLayer,
        Rule::PrimeSquareQuotient,
        Rule::SylowCount,
        Rule::OrderTwoQuotient,
        Rule::WildInertiaNormal,
        Rule::OddClassNumber,
        Rule::UnramifiedDiscriminant,
        Rule::KroneckerWeberCap,
        Rule::TameResidue,
        Rule::NoCubicOverSqrtMinus3,
        Rule::ClassNumberOne,
        Rule::NoGoodReductionEverywhere,
        Rule::MaximalStage,
        Rule::Containment,
        Rule::OnePrimeAboveP,
        Rule::StageTower,
        Rule::MaximalityContradiction,
        Rule::NilpotentTwoGroup,
        Rule::InertInGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::DegreeCap => "degree-cap",
            Rule::Solvable => "solvable",
            Rule::AbelianLayer => "abelian-layer",
            Rule::PrimeSquareQuotient => "prime-square-quotient",
            Rule::SylowCount => "sylow-count",
            Rule::OrderTwoQuotient => "order-two-quotient",
            Rule::WildInertiaNormal => "wild-inertia-normal",
            Rule::OddClassNumber => "odd-class-number",
            Rule::UnramifiedDiscriminant => "unramified-discriminant",
            Rule::KroneckerWeberCap => "kronecker-weber-cap",
            Rule::TameResidue => "tame-residue",
            Rule::NoCubicOverSqrtMinus3 => "no-cubic-over-sqrt-minus-3",
            Rule::ClassNumberOne => "class-number-one",
            Rule::NoGoodReductionEverywhere => "no-good-reduction-everywhere",
            Rule::MaximalStage => "maximal-stage",
            Rule::Containment => "containment",
            Rule::OnePrimeAboveP => "one-prime-above-p",
            Rule::StageTower => "stage-tower",
            Rule::MaximalityContradiction => "maximality-contradiction",
            Rule::NilpotentTwoGroup => "nilpotent-two-group",
            Rule::InertInGaussian => "inert-in-gaussian",
        }
    }

    /// Citation anchor carried by every application of the rule.
    ///
    /// The Sylow-count step excludes a normal ℓ-Sylow subgroup with the same
    /// wild-inertia argument for every odd ℓ, so it shares that anchor.
    pub fn anchor(self) -> &'static str {
        match self {
            Rule::DegreeCap => "degree-cap",
            Rule::Solvable => "solvable-below-60",
            Rule::AbelianLayer => "abelian-layer",
            Rule::PrimeSquareQuotient => "prime-square-quotient",
            Rule::SylowCount | Rule::WildInertiaNormal => "wild-inertia-normal",
            Rule::OrderTwoQuotient => "order-two-quotient",
            Rule::OddClassNumber => "odd-class-number",
            Rule::UnramifiedDiscriminant => "unramified-discriminant",
            Rule::KroneckerWeberCap => "kronecker-weber-cap",
            Rule::TameResidue => "tame-residue-roots",
            Rule::NoCubicOverSqrtMinus3 => "no-cubic-over-sqrt-minus-3",
            Rule::ClassNumberOne => "class-number-one",
            Rule::NoGoodReductionEverywhere => "no-good-reduction-everywhere",
            Rule::MaximalStage | Rule::MaximalityContradiction => "maximal-stage-choice",
            Rule::Containment => "division-field-containment",
            Rule::OnePrimeAboveP => "one-prime-above-p",
            Rule::StageTower => "stage-tower",
            Rule::NilpotentTwoGroup => "nilpotent-two-group",
            Rule::InertInGaussian => "inert-in-gaussian",
        }
    }

    pub fn from_name(s: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.name() == s)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSet {
    disabled: BTreeSet<Rule>,
}

impl RuleSet {
    pub fn all() -> RuleSet {
        RuleSet::default()
    }

    pub fn without(rule: Rule) -> RuleSet {
        let mut s = RuleSet::default();
        s.disable(rule);
        s
    }

    pub fn disable(&mut self, rule: Rule) {
        self.disabled.insert(rule);
    }

    pub fn enable(&mut self, rule: Rule) {
        self.disabled.remove(&rule);
    }

    pub fn is_enabled(&self, rule: Rule) -> bool {
        !self.disabled.contains(&rule)
    }
}

/// Standing hypotheses on `L`. Runs refuse to start unless all are set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub galois_with_roots_of_unity: bool,
    pub unramified_outside_ell_p: bool,
    pub ramification_at_p_is_1_or_ell: bool,
    pub upper_ramification_bound_at_ell: bool,
}

impl Default for Hypotheses {
    fn default() -> Self {
        Hypotheses {
            galois_with_roots_of_unity: true,
            unramified_outside_ell_p: true,
            ramification_at_p_is_1_or_ell: true,
            upper_ramification_bound_at_ell: true,
        }
    }
}

impl Hypotheses {
    fn all_set(&self) -> bool {
        self.galois_with_roots_of_unity
            && self.unramified_outside_ell_p
            && self.ramification_at_p_is_1_or_ell
            && self.upper_ramification_bound_at_ell
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub ell: u64,
    pub p: u64,
    pub hypotheses: Hypotheses,
}

impl Scenario {
    pub fn new(ell: u64, p: u64) -> Scenario {
        Scenario { ell, p, hypotheses: Hypotheses::default() }
    }
}

pub const ODD_PAIRS: [(u64, u64); 4] = [(3, 2), (3, 5), (5, 2), (5, 3)];
pub const TWO_PRIMES: [u64; 2] = [3, 7];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Premise {
    /// Conclusion of an earlier step, 1-based.
    Step { index: usize },
    /// Output of a computation performed by the step's check.
    Value { name: String, value: String },
    Ledger { field: FieldTag, invariant: String, value: String, citation: String },
    Hypothesis { text: String },
}

impl fmt::Display for Premise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Premise::Step { index } => write!(f, "#{index}"),
            Premise::Value { name, value } => write!(f, "{name} = {value}"),
            Premise::Ledger { field, invariant, value, citation } => {
                write!(f, "ledger {field} {invariant} = {value} [{citation}]")
            }
            Premise::Hypothesis { text } => write!(f, "assumed: {text}"),
        }
    }
}

/// Side condition of a step, recomputed on replay.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Check {
    Logic,
    DegreeCap { ell: u64, p: u64, rd: String, cap: u64 },
    Quotient { numerator: u64, denominator: u64, quotient: u64 },
    Below { value: u64, limit: u64 },
    Splitting { ell: u64, p: u64, primes: u64 },
    Layer { ell: u64, p: u64, candidates: Vec<FieldTag> },
    EllPowers { ell: u64, bound: u64, orders: Vec<u64> },
    CandidateOrders { ell: u64, bound: u64, orders: Vec<u64> },
    TwoModFour { orders: Vec<u64> },
    Coprime { values: Vec<u64>, modulus: u64 },
    PowersOfTwo { values: Vec<u64> },
    KnownFieldRd { disc: String, degree: u64, rd: String, cap: u64, needed: u64 },
    CyclotomicCap { p: u64, n: u64, cap: u64 },
    ResidueField { field: FieldTag, q: u64 },
    ResidueRoots { q: u64, max_n: u64, roots: Vec<u64> },
    ClassNumber { disc: i64, h: u64 },
    GaussianDegrees { cap: u64, degrees: Vec<u64> },
    Congruence { p: u64, modulus: u64, residue: u64 },
    Tower { ell: u64, t: usize, a: usize, steps: usize, run: Vec<(u64, u64)> },
    Contained { ell: u64, p: u64, field: FieldTag },
    All { checks: Vec<Check> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub rule: Rule,
    pub premises: Vec<Premise>,
    pub conclusion: String,
    pub anchor: String,
    pub check: Check,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let premises: Vec<String> = self.premises.iter().map(Premise::to_string).collect();
        write!(
            f,
            "STEP {} RULE {} PREMISES {} CONCLUSION {} CITE {}",
            self.index,
            self.rule,
            if premises.is_empty() { "-".to_string() } else { premises.join("; ") },
            self.conclusion,
            self.anchor
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofTrace {
    pub steps: Vec<Step>,
}

impl ProofTrace {
    /// One line per step.
    pub fn to_text(&self) -> String {
        self.steps.iter().map(|s| format!("{s}\n")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<ProofTrace, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn contains_conclusion(&self, needle: &str) -> bool {
        self.steps.iter().any(|s| s.conclusion.contains(needle))
    }

    pub fn rules(&self) -> BTreeSet<Rule> {
        self.steps.iter().map(|s| s.rule).collect()
    }

    fn append(&mut self, other: ProofTrace) -> usize {
        let offset = self.steps.len();
        for mut s in other.steps {
            s.index += offset;
            for p in &mut s.premises {
                if let Premise::Step { index } = p {
                    *index += offset;
                }
            }
            self.steps.push(s);
        }
        self.steps.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "detail", rename_all = "UPPERCASE")]
pub enum Verdict {
    Contained(FieldTag),
    Excluded,
    /// Open branches, described by the candidate they leave.
    Stuck(Vec<String>),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Contained(field) => write!(f, "CONTAINED {field}"),
            Verdict::Excluded => write!(f, "EXCLUDED"),
            Verdict::Stuck(open) => write!(f, "STUCK {}", open.join("; ")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateConclusion {
    Nonexistent,
    NoObstruction,
}

impl fmt::Display for GateConclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateConclusion::Nonexistent => "NONEXISTENT",
            GateConclusion::NoObstruction => "NO-OBSTRUCTION",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("step {step}: {msg}")]
pub struct ReplayError {
    pub step: usize,
    pub msg: String,
}

/// Orders `m ≤ bound` divisible by some `ℓ(1 + cℓ)`, `c ≥ 1`, where
/// `1 + cℓ` is an admissible Sylow count for a group of order `m`.
pub fn candidate_orders(ell: u64, bound: u64) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    if ell < 3 || bound == 0 {
        return out;
    }
    for m in 1..=bound {
        let Ok(counts) = sylow_admissible_counts(m, ell) else { continue };
        let hit = counts.iter().any(|&n| n > 1 && m % (ell * n) == 0);
        if hit {
            out.insert(m);
        }
    }
    out
}

/// Whether a residue field of size `q` contains the `n`-th roots of unity.
pub fn residue_root_check(n: u64, q: u64) -> bool {
    n >= 1 && q >= 2 && (q - 1) % n == 0
}

fn squarefree_part(d: i64) -> i64 {
    let sign = d.signum();
    let core: u64 = factor_u64(d.unsigned_abs())
        .into_iter()
        .filter(|&(_, e)| e % 2 == 1)
        .map(|(q, _)| q)
        .product();
    sign * core as i64
}

fn quadratic_generators(tag: &FieldTag) -> Option<Vec<i64>> {
    match tag {
        FieldTag::Quadratic(d) => Some(vec![*d]),
        FieldTag::Cyclotomic(4) => Some(vec![-1]),
        FieldTag::Cyclotomic(3) => Some(vec![-3]),
        _ => None,
    }
}

/// Size of the residue field of any prime above 2 in a quadratic or
/// biquadratic field.
pub fn residue_field_at_two(field: &FieldTag) -> Result<u64> {
    let mut ds = match field {
        FieldTag::Composite(parts) if parts.len() == 2 => {
            let a = quadratic_generators(&parts[0]);
            let b = quadratic_generators(&parts[1]);
            match (a, b) {
                (Some(a), Some(b)) => vec![a[0], b[0], squarefree_part(a[0] * b[0])],
                _ => vec![],
            }
        }
        other => quadratic_generators(other).unwrap_or_default(),
    };
    if ds.is_empty() {
        return Err(ExclusionError::Scope(format!(
            "residue field at 2 only for quadratic and biquadratic fields, not {field}"
        )));
    }
    ds.dedup();
    let inert = ds.iter().any(|d| d.rem_euclid(8) == 5);
    Ok(if inert { 4 } else { 2 })
}

fn ell_powers(ell: u64, bound: u64) -> Vec<u64> {
    let mut out = vec![];
    let mut x = ell * ell;
    while x <= bound {
        out.push(x);
        x *= ell;
    }
    out
}

fn is_power_of(x: u64, ell: u64) -> bool {
    let mut x = x;
    while x > 1 && x % ell == 0 {
        x /= ell;
    }
    x == 1
}

fn gaussian_degrees(cap: u64) -> Vec<u64> {
    (8..=cap).step_by(4).filter(|m| !m.is_power_of_two()).collect()
}

fn residue_roots(q: u64, max_n: u64) -> Vec<u64> {
    (3..=max_n).step_by(2).filter(|&n| residue_root_check(n, q)).collect()
}

fn fmt_set(xs: &[u64]) -> String {
    let parts: Vec<String> = xs.iter().map(u64::to_string).collect();
    format!("{{{}}}", parts.join(", "))
}

const HYP_GALOIS: &str = "L/Q is Galois and contains the l-th roots of unity";
const HYP_UNRAMIFIED: &str = "L is unramified outside l and p";
const HYP_TAME: &str = "the ramification index of L at p is 1 or l";
const HYP_UPPER: &str = "upper ramification groups above l vanish past 1/(l-1)";

const TOWER_STEPS: usize = 3;

fn hyp(text: &str) -> Premise {
    Premise::Hypothesis { text: text.to_string() }
}

fn val(name: &str, value: impl fmt::Display) -> Premise {
    Premise::Value { name: name.to_string(), value: value.to_string() }
}

fn prior(index: usize) -> Premise {
    Premise::Step { index }
}

fn tower_model(ell: u64, t: usize, a: usize) -> Result<InertiaModule> {
    let n: Vec<Vec<i64>> = (0..t).map(|i| (0..t).map(|j| i64::from(i == j)).collect()).collect();
    Ok(InertiaModule::standard(ell, t, a, &n)?)
}

struct Builder<'e> {
    engine: &'e Engine,
    trace: ProofTrace,
}

impl<'e> Builder<'e> {
    fn new(engine: &'e Engine) -> Self {
        Builder { engine, trace: ProofTrace::default() }
    }

    fn on(&self, rule: Rule) -> bool {
        self.engine.rules.is_enabled(rule)
    }

    fn step(&mut self, rule: Rule, premises: Vec<Premise>, conclusion: String, check: Check) -> usize {
        let index = self.trace.steps.len() + 1;
        self.trace.steps.push(Step {
            index,
            rule,
            premises,
            conclusion,
            anchor: rule.anchor().to_string(),
            check,
        });
        index
    }

    fn ledger(&self, field: &FieldTag, invariant: &str) -> Result<(AxiomValue, Premise)> {
        let e = self.engine.data.ledger.lookup(field, invariant)?;
        let premise = Premise::Ledger {
            field: field.clone(),
            invariant: invariant.to_string(),
            value: e.value.to_string(),
            citation: e.citation.clone(),
        };
        Ok((e.value.clone(), premise))
    }

    fn ledger_true(&self, field: &FieldTag, invariant: &str) -> Result<Premise> {
        let (v, p) = self.ledger(field, invariant)?;
        if v != AxiomValue::Bool(true) {
            return Err(ExclusionError::Precondition(format!("ledger {invariant} of {field} is {v}")));
        }
        Ok(p)
    }

    fn ledger_class_number_one(&self, field: &FieldTag) -> Result<Premise> {
        let (v, p) = self.ledger(field, "class_number")?;
        if v != AxiomValue::Int(1.into()) {
            return Err(ExclusionError::Precondition(format!("class number of {field} is {v}")));
        }
        Ok(p)
    }

    fn finish(self, open: Vec<String>, field: FieldTag) -> (Verdict, ProofTrace) {
        let verdict = if open.is_empty() { Verdict::Contained(field) } else { Verdict::Stuck(open) };
        (verdict, self.trace)
    }
}

/// Runs the case analyses and gates against a data set with a chosen set
/// of enabled rules.
#[derive(Clone, Debug)]
pub struct Engine {
    data: DataSet,
    rules: RuleSet,
}

impl Engine {
    pub fn new(data: DataSet, rules: RuleSet) -> Engine {
        Engine { data, rules }
    }

    pub fn bundled() -> Engine {
        Engine::new(DataSet::bundled(), RuleSet::all())
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    fn check_scenario(s: &Scenario) -> Result<()> {
        if !s.hypotheses.all_set() {
            return Err(ExclusionError::Precondition("all standing hypotheses must be set".into()));
        }
        Ok(())
    }

    /// Target field `Q(μ_ℓ, p^{1/ℓ})` for odd ℓ, `Q(μ₄, √p)` for ℓ = 2.
    pub fn target_field(ell: u64, p: u64) -> Result<FieldTag> {
        Ok(base_cyclotomic(ell).adjoin(FieldTag::pure_radical(ell, p)?))
    }

    /// `H = Gal(L/Q(μ_ℓ))` for odd ℓ.
    pub fn run_odd(&self, s: &Scenario) -> Result<(Verdict, ProofTrace)> {
        let (ell, p) = (s.ell, s.p);
        if !ODD_PAIRS.contains(&(ell, p)) {
            return Err(ExclusionError::Scope(format!("odd case analysis not scripted for (l, p) = ({ell}, {p})")));
        }
        Self::check_scenario(s)?;
        let mut b = Builder::new(self);
        let base = base_cyclotomic(ell);
        let target = Self::target_field(ell, p)?;
        let mut open = vec![];

        if !b.on(Rule::DegreeCap) {
            return Ok(b.finish(vec!["[L:Q] unbounded".into()], target));
        }
        let rd = fontaine_joshi_bound(ell, 1, &[(p, 1)])?;
        let cap = max_degree(&self.data.table, &rd)?;
        let h_bound = cap / (ell - 1);
        let s_cap = b.step(
            Rule::DegreeCap,
            vec![hyp(HYP_UNRAMIFIED), hyp(HYP_TAME), hyp(HYP_UPPER), val("rd(L) bound", format!("{rd} ≈ {}", rd.to_decimal(4)))],
            format!("[L:Q] ≤ {cap}, so |H| ≤ {h_bound}"),
            Check::All {
                checks: vec![
                    Check::DegreeCap { ell, p, rd: rd.to_string(), cap },
                    Check::Quotient { numerator: cap, denominator: ell - 1, quotient: h_bound },
                ],
            },
        );

        if !b.on(Rule::Solvable) {
            return Ok(b.finish(vec!["H without nontrivial abelian quotient".into()], target));
        }
        let ax = b.ledger_true(&FieldTag::Rationals, "groups_below_60_solvable")?;
        let s_solv = b.step(
            Rule::Solvable,
            vec![prior(s_cap), ax],
            format!("|H| ≤ {h_bound} < 60, so H is solvable and H ≠ 1 has a nontrivial abelian quotient"),
            Check::Below { value: h_bound, limit: 60 },
        );

        if !b.on(Rule::AbelianLayer) {
            return Ok(b.finish(vec![format!("maximal abelian subextension of L/{base} undetermined")], target));
        }
        let layer = abelian_layer(ell, p)?;
        let candidates = layer.candidates.clone().ok_or_else(|| {
            ExclusionError::Scope(format!("{p} has {} primes in {base}", layer.rank_bound))
        })?;
        let h_base = b.ledger_class_number_one(&base)?;
        let s_layer = b.step(
            Rule::AbelianLayer,
            vec![prior(s_solv), h_base, val("primes above p in F", layer.rank_bound), hyp(HYP_GALOIS)],
            format!("E = {target}, [E:F] = {ell}, so {ell} divides |H|; |H| = {ell} gives L = E"),
            Check::All {
                checks: vec![
                    Check::Splitting { ell, p, primes: layer.rank_bound },
                    Check::Layer { ell, p, candidates },
                ],
            },
        );

        let powers = ell_powers(ell, h_bound);
        let mut s_g2 = None;
        if b.on(Rule::PrimeSquareQuotient) {
            s_g2 = Some(b.step(
                Rule::PrimeSquareQuotient,
                vec![prior(s_layer), val(&format!("{ell}-group orders in range"), fmt_set(&powers))],
                format!("H^ab has order {ell}, so H is not a {ell}-group of order ≥ {}", ell * ell),
                Check::EllPowers { ell, bound: h_bound, orders: powers },
            ));
        } else {
            open.extend(powers.iter().map(|m| format!("|H| = {m} ({ell}-group)")));
        }

        let mut remaining: BTreeSet<u64>;
        if b.on(Rule::SylowCount) {
            remaining = candidate_orders(ell, h_bound);
            let orders: Vec<u64> = remaining.iter().copied().collect();
            let smallest = ell * (1 + ell);
            let conclusion = if orders.is_empty() {
                format!("|H| ≤ {h_bound} < {smallest}")
            } else {
                format!("|H| ∈ {}", fmt_set(&orders))
            };
            let mut premises = vec![prior(s_cap), prior(s_layer)];
            premises.extend(s_g2.map(prior));
            b.step(
                Rule::SylowCount,
                premises,
                conclusion,
                Check::CandidateOrders { ell, bound: h_bound, orders },
            );
        } else {
            remaining = BTreeSet::new();
            open.extend(
                (2..=h_bound)
                    .filter(|m| m % ell == 0 && !is_power_of(*m, ell))
                    .map(|m| format!("|H| = {m}")),
            );
        }

        let twos: Vec<u64> = remaining.iter().copied().filter(|m| m % 4 == 2).collect();
        if !twos.is_empty() && b.on(Rule::OrderTwoQuotient) {
            b.step(
                Rule::OrderTwoQuotient,
                vec![prior(s_layer), val("|H| candidates", fmt_set(&twos))],
                format!("|H| = {} would give H a quotient of order 2, but H^ab has order {ell}", twos.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")),
                Check::TwoModFour { orders: twos.clone() },
            );
            for m in &twos {
                remaining.remove(m);
            }
        }

        if !remaining.is_empty() {
            let e_degree = ell * (ell - 1);
            let rel: Vec<u64> = remaining.iter().map(|m| m / ell).collect();
            // (degree [L:E], degree of an unramified subextension of L/E it guarantees)
            let mut unramified: Vec<(u64, u64)> = vec![];
            let mut s_wild = None;
            if b.on(Rule::WildInertiaNormal) {
                unramified = rel
                    .iter()
                    .copied()
                    .filter(|d| d.gcd(&(ell * p)) == 1)
                    .filter_map(|d| match d {
                        _ if d % 2 == 1 => Some((d, d)),
                        _ if d.is_power_of_two() => Some((d, 2)),
                        _ => None,
                    })
                    .collect();
                if !unramified.is_empty() {
                    let full: Vec<u64> = unramified.iter().filter(|(d, u)| d == u).map(|x| x.0).collect();
                    let quad: Vec<u64> = unramified.iter().filter(|(d, u)| d != u).map(|x| x.0).collect();
                    let mut parts = vec![];
                    if !full.is_empty() {
                        parts.push(format!("L/E is unramified at every finite prime for [L:E] ∈ {}", fmt_set(&full)));
                    }
                    if !quad.is_empty() {
                        parts.push(format!(
                            "E has an everywhere unramified quadratic extension inside L for [L:E] ∈ {}",
                            fmt_set(&quad)
                        ));
                    }
                    let degrees: Vec<u64> = unramified.iter().map(|x| x.0).collect();
                    s_wild = Some(b.step(
                        Rule::WildInertiaNormal,
                        vec![prior(s_layer), hyp(HYP_TAME), val("[L:E]", fmt_set(&degrees))],
                        format!(
                            "E absorbs the ramification at {p}, and a prime above {ell} that stays unsplit would make the {ell}-Sylow subgroup normal; {}",
                            parts.join("; ")
                        ),
                        Check::Coprime { values: degrees, modulus: ell * p },
                    ));
                }
            }

            let two_powers: Vec<u64> =
                unramified.iter().filter(|(d, u)| d != u).map(|x| x.0).collect();
            if !two_powers.is_empty() && b.on(Rule::OddClassNumber) {
                let (v, parity) = b.ledger(&target, "class_number_parity")?;
                if v == AxiomValue::Parity(crate::cft::Parity::Odd) {
                    b.step(
                        Rule::OddClassNumber,
                        vec![prior(s_wild.expect("wild step recorded")), parity],
                        format!(
                            "[L:E] ∈ {} needs an unramified quadratic extension of E, but h(E) is odd",
                            fmt_set(&two_powers)
                        ),
                        Check::PowersOfTwo { values: two_powers.clone() },
                    );
                    for d in &two_powers {
                        remaining.remove(&(d * ell));
                    }
                }
            }

            let rest: Vec<(u64, u64)> =
                unramified.iter().copied().filter(|(d, _)| remaining.contains(&(d * ell))).collect();
            if !rest.is_empty() && b.on(Rule::UnramifiedDiscriminant) {
                let (v, disc_premise) = b.ledger(&target, "abs_discriminant")?;
                let AxiomValue::Factored(disc) = v else {
                    return Err(ExclusionError::Precondition(format!("discriminant of {target} is {v}")));
                };
                let rd_e = known_field_rd(&disc, e_degree)?;
                let cap_e = max_degree(&self.data.table, &rd_e)?;
                for (d, u) in rest {
                    let needed = u * e_degree;
                    if needed > cap_e {
                        let sub = if u == d { "L".to_string() } else { format!("the degree-{u} unramified layer") };
                        b.step(
                            Rule::UnramifiedDiscriminant,
                            vec![prior(s_wild.expect("wild step recorded")), disc_premise.clone()],
                            format!(
                                "[L:E] = {d}: rd({sub}) = rd(E) = {rd_e} ≈ {}, degree cap {cap_e}, so [L:Q] ≤ {cap_e} < {needed}",
                                rd_e.to_decimal(4)
                            ),
                            Check::KnownFieldRd {
                                disc: disc.to_string(),
                                degree: e_degree,
                                rd: rd_e.to_string(),
                                cap: cap_e,
                                needed,
                            },
                        );
                        remaining.remove(&(d * ell));
                    }
                }
            }
        }
        open.extend(remaining.iter().map(|m| format!("|H| = {m}")));
        Ok(b.finish(open, target))
    }

    /// ℓ = 2, with `E₀` the maximal subfield of `L` abelian over Q and `E₁`
    /// the maximal subfield abelian over `E₀`.
    pub fn run_two(&self, s: &Scenario) -> Result<(Verdict, ProofTrace)> {
        let p = s.p;
        if s.ell != 2 || !TWO_PRIMES.contains(&p) {
            return Err(ExclusionError::Scope(format!("l = 2 case analysis not scripted for p = {p}")));
        }
        Self::check_scenario(s)?;
        let mut b = Builder::new(self);
        let gauss = base_cyclotomic(2);
        let target = Self::target_field(2, p)?;
        let mut open = vec![];

        if !b.on(Rule::DegreeCap) {
            return Ok(b.finish(vec!["[L:Q] unbounded".into()], target));
        }
        let rd = fontaine_joshi_bound(2, 1, &[(p, 1)])?;
        let cap = max_degree(&self.data.table, &rd)?;
        let s_cap = b.step(
            Rule::DegreeCap,
            vec![hyp(HYP_UNRAMIFIED), hyp(HYP_TAME), hyp(HYP_UPPER), val("rd(L) bound", format!("{rd} ≈ {}", rd.to_decimal(4)))],
            format!("[L:Q] ≤ {cap}"),
            Check::DegreeCap { ell: 2, p, rd: rd.to_string(), cap },
        );

        if !b.on(Rule::Solvable) {
            return Ok(b.finish(vec!["Gal(L/Q) without nontrivial abelian quotient".into()], target));
        }
        let ax = b.ledger_true(&FieldTag::Rationals, "groups_below_60_solvable")?;
        let s_solv = b.step(
            Rule::Solvable,
            vec![prior(s_cap), ax],
            format!("[L:Q] ≤ {cap} < 60, so Gal(L/Q) is solvable and L ≠ Q gives E₀ ≠ Q"),
            Check::Below { value: cap, limit: 60 },
        );

        if !b.on(Rule::KroneckerWeberCap) {
            return Ok(b.finish(vec!["E₀ undetermined".into()], target));
        }
        let kw = b.ledger_true(&FieldTag::Rationals, "kronecker_weber")?;
        let two_cap = cyclotomic_cap(2, 1)?;
        let s_kw = b.step(
            Rule::KroneckerWeberCap,
            vec![prior(s_solv), kw, hyp(HYP_TAME), val("2-power cyclotomic cap", format!("mu_{}", 1u64 << two_cap))],
            format!("E₀ ∩ Q(mu_(2^inf)) ⊂ Q(mu_{}), so E₀ ⊂ {target}", 1u64 << two_cap),
            Check::CyclotomicCap { p: 2, n: 1, cap: two_cap },
        );

        // Branch i ∉ L.
        let real_sides = [FieldTag::quadratic(p as i64)?, FieldTag::quadratic(-(p as i64))?];
        let mut s_odd = None;
        if b.on(Rule::PrimeSquareQuotient) {
            s_odd = Some(b.step(
                Rule::PrimeSquareQuotient,
                vec![prior(s_kw)],
                format!(
                    "i ∉ L: E₀ ∈ {{{}, {}}} has degree 2, so E₂ = E₀ and [E₁:E₀] is odd",
                    real_sides[0], real_sides[1]
                ),
                Check::Logic,
            ));
        } else {
            open.push("i ∉ L: 2-power layer above E₀".into());
        }
        if let Some(s_odd) = s_odd {
            let max_n = cap / 2;
            for e0 in &real_sides {
                if !b.on(Rule::TameResidue) {
                    open.push(format!("i ∉ L, E₀ = {e0}: ramification above 2"));
                    continue;
                }
                let q = residue_field_at_two(e0)?;
                let mut roots = residue_roots(q, max_n);
                let s_res = b.step(
                    Rule::TameResidue,
                    vec![prior(s_odd), hyp(HYP_TAME), val("residue field of E₀ at 2", format!("F_{q}"))],
                    if roots.is_empty() {
                        format!("E₀ = {e0}: odd n > 1 with n | {} does not exist, so E₁/E₀ is unramified", q - 1)
                    } else {
                        format!("E₀ = {e0}: ramification index above 2 in E₁/E₀ is 1 or n ∈ {}", fmt_set(&roots))
                    },
                    Check::All {
                        checks: vec![
                            Check::ResidueField { field: e0.clone(), q },
                            Check::ResidueRoots { q, max_n, roots: roots.clone() },
                        ],
                    },
                );
                let mut last = s_res;
                if *e0 == FieldTag::cyclotomic(3) && roots == [3] && b.on(Rule::NoCubicOverSqrtMinus3) {
                    let ax = b.ledger_true(e0, "no_galois_cubic_unramified_outside_2")?;
                    last = b.step(
                        Rule::NoCubicOverSqrtMinus3,
                        vec![prior(s_res), ax],
                        format!("E₀ = {e0}: n = 3 is impossible, so E₁/E₀ is unramified"),
                        Check::Logic,
                    );
                    roots.clear();
                }
                if !roots.is_empty() {
                    open.extend(roots.iter().map(|n| format!("i ∉ L, E₀ = {e0}, ramification index {n}")));
                    continue;
                }
                if !b.on(Rule::ClassNumberOne) {
                    open.push(format!("i ∉ L, E₀ = {e0}: unramified abelian E₁/E₀"));
                    continue;
                }
                let h = b.ledger_class_number_one(e0)?;
                let disc = quadratic_disc(e0);
                let mut checks = vec![];
                let mut premises = vec![prior(last), h];
                if let Ok(hc) = quadratic_class_number(disc) {
                    premises.push(val(&format!("h(disc {disc}) by reduced forms"), hc));
                    checks.push(Check::ClassNumber { disc, h: hc });
                }
                b.step(
                    Rule::ClassNumberOne,
                    premises,
                    format!("E₀ = {e0}: h(E₀) = 1 forces E₁ = E₀, so L = E₀ ⊂ {target}"),
                    Check::All { checks },
                );
            }
        }

        // Branch i ∈ L.
        let mut s_gauss = None;
        if b.on(Rule::AbelianLayer) {
            let layer = abelian_layer(2, p)?;
            let candidates = layer.candidates.clone().unwrap_or_default();
            let h = b.ledger_class_number_one(&gauss)?;
            s_gauss = Some(b.step(
                Rule::AbelianLayer,
                vec![prior(s_kw), h, val("primes above p in Q(mu_4)", layer.rank_bound)],
                format!(
                    "i ∈ L: E₀ = {gauss} would make E₁ = {target} abelian over Q; so E₀ = {target} and Gal(L/{gauss}) has abelianization of order 2"
                ),
                Check::All {
                    checks: vec![
                        Check::Splitting { ell: 2, p, primes: layer.rank_bound },
                        Check::Layer { ell: 2, p, candidates },
                    ],
                },
            ));
        } else {
            open.push(format!("i ∈ L, E₀ = {gauss}"));
        }
        let degrees = if b.on(Rule::PrimeSquareQuotient) {
            let degrees = gaussian_degrees(cap);
            b.step(
                Rule::PrimeSquareQuotient,
                vec![prior(s_cap)].into_iter().chain(s_gauss.map(prior)).collect(),
                if degrees.is_empty() {
                    format!("i ∈ L: [L:Q] is a multiple of 4 above 4 and not a power of 2, impossible below degree cap {cap}")
                } else {
                    format!("i ∈ L: [L:Q] ∈ {}", fmt_set(&degrees))
                },
                Check::GaussianDegrees { cap, degrees: degrees.clone() },
            );
            degrees
        } else {
            let all: Vec<u64> = (8..=cap).step_by(4).collect();
            open.extend(all.iter().filter(|m| m.is_power_of_two()).map(|m| format!("i ∈ L, [L:Q] = {m}")));
            all.into_iter().filter(|m| !m.is_power_of_two()).collect()
        };
        if !degrees.is_empty() {
            let q = residue_field_at_two(&target)?;
            let ns: Vec<u64> = degrees.iter().map(|m| m / 4).collect();
            let mut last = None;
            if b.on(Rule::TameResidue) {
                let ramified: Vec<u64> = ns.iter().copied().filter(|&n| residue_root_check(n, q)).collect();
                let conclusion = if ramified.is_empty() {
                    format!("i ∈ L: L/E₀ cyclic of degree n ∈ {} is unramified, since residue_root_check(n, {q}) = false", fmt_set(&ns))
                } else {
                    format!("i ∈ L: ramified degrees n ∈ {} remain", fmt_set(&ramified))
                };
                let checks = ns
                    .iter()
                    .map(|&n| Check::ResidueRoots { q, max_n: n, roots: residue_roots(q, n) })
                    .chain([Check::ResidueField { field: target.clone(), q }])
                    .collect();
                last = Some(b.step(
                    Rule::TameResidue,
                    vec![hyp(HYP_TAME), val("residue field of E₀ at 2", format!("F_{q}"))],
                    conclusion,
                    Check::All { checks },
                ));
                open.extend(ramified.iter().map(|n| format!("i ∈ L, [L:Q] = {}, ramified", 4 * n)));
                if !ramified.is_empty() {
                    last = None;
                }
            } else {
                open.extend(degrees.iter().map(|m| format!("i ∈ L, [L:Q] = {m}: ramification above 2")));
            }
            if let Some(last) = last {
                if b.on(Rule::ClassNumberOne) {
                    let h = b.ledger_class_number_one(&target)?;
                    b.step(
                        Rule::ClassNumberOne,
                        vec![prior(last), h],
                        format!("i ∈ L: h({target}) = 1 leaves no nontrivial unramified abelian L/E₀"),
                        Check::Logic,
                    );
                } else {
                    open.extend(degrees.iter().map(|m| format!("i ∈ L, [L:Q] = {m}: unramified L/E₀")));
                }
            }
        }
        Ok(b.finish(open, target))
    }

    /// Dispatches to [`Engine::run_two`] for ℓ = 2 and [`Engine::run_odd`] otherwise.
    pub fn run(&self, s: &Scenario) -> Result<(Verdict, ProofTrace)> {
        if s.ell == 2 {
            self.run_two(s)
        } else {
            self.run_odd(s)
        }
    }

    /// Auxiliary prime used against bad prime `p`.
    pub fn auxiliary_prime(p: u64) -> Result<u64> {
        match p {
            2 | 5 => Ok(3),
            3 | 7 => Ok(2),
            _ => Err(ExclusionError::Scope(format!("no auxiliary prime for p = {p}"))),
        }
    }

    fn require(&self, rule: Rule) -> Result<()> {
        if self.rules.is_enabled(rule) {
            Ok(())
        } else {
            Err(ExclusionError::Disabled(rule))
        }
    }

    /// No semistable abelian variety over Q has good reduction outside `p`.
    pub fn single_bad_prime(&self, p: u64) -> Result<ProofTrace> {
        let ell = Self::auxiliary_prime(p)?;
        for r in [
            Rule::NoGoodReductionEverywhere,
            Rule::MaximalStage,
            Rule::Containment,
            Rule::OnePrimeAboveP,
            Rule::StageTower,
            Rule::MaximalityContradiction,
        ] {
            self.require(r)?;
        }
        let mut b = Builder::new(self);
        let ax = b.ledger_true(&FieldTag::Rationals, "no_abelian_scheme_over_Z")?;
        let s_bad = b.step(
            Rule::NoGoodReductionEverywhere,
            vec![ax, hyp(&format!("A is semistable over Q with good reduction outside {p}"))],
            format!("A has bad semistable reduction at {p} and toric rank t ≥ 1 there"),
            Check::Logic,
        );
        let ax = b.ledger_true(&FieldTag::Rationals, "faltings_finiteness")?;
        let s_max = b.step(
            Rule::MaximalStage,
            vec![prior(s_bad), ax],
            format!("choose A in its isogeny class with maximal effective stage at {p}"),
            Check::Logic,
        );
        let (verdict, sub) = self.run(&Scenario::new(ell, p))?;
        let field = match verdict {
            Verdict::Contained(f) => f,
            Verdict::Stuck(open) => return Err(ExclusionError::Open(open)),
            Verdict::Excluded => return Err(ExclusionError::Precondition("containment run excluded L".into())),
        };
        let mut trace = b.trace;
        let last_sub = trace.append(sub);
        let mut b = Builder { engine: self, trace };
        let s_cont = b.step(
            Rule::Containment,
            vec![prior(s_max), prior(last_sub)],
            format!("L = Q(A[{ell}]) ⊂ {field}"),
            Check::Contained { ell, p, field: field.clone() },
        );
        let primes = splitting_in_cyclotomic(ell, p)?;
        let s_one = b.step(
            Rule::OnePrimeAboveP,
            vec![prior(s_cont), val(&format!("primes above {p} in {}", base_cyclotomic(ell)), primes)],
            format!("exactly one prime of L lies above {p}, so its decomposition group is Gal(L/Q)"),
            Check::Splitting { ell, p, primes },
        );
        let model = tower_model(ell, 1, 1)?;
        let run = model.tower(TOWER_STEPS, &KernelStrategy::FlagM1)?;
        let stages: Vec<String> = run.steps.iter().map(|(s, _)| s.to_string()).collect();
        let s_tower = b.step(
            Rule::StageTower,
            vec![prior(s_one), val("model stages", stages.join(", ")), hyp(run.assumption)],
            "a Galois-stable kernel between the reduced flags yields an isogenous A' with effective stage one larger".to_string(),
            Check::Tower { ell, t: 1, a: 1, steps: TOWER_STEPS, run: run.steps.clone() },
        );
        b.step(
            Rule::MaximalityContradiction,
            vec![prior(s_max), prior(s_tower)],
            format!("A' contradicts the maximal choice of A: no semistable abelian variety over Q has good reduction outside {p}"),
            Check::Logic,
        );
        Ok(b.trace)
    }

    /// Gate for a nilpotent 2-division field with bad prime `p`.
    pub fn nilpotent_gate(&self, p: u64) -> Result<(GateConclusion, ProofTrace)> {
        if p % 2 == 0 || !crate::exactnum::is_prime(p) {
            return Err(ExclusionError::Precondition(format!("p = {p} must be an odd prime")));
        }
        self.require(Rule::InertInGaussian)?;
        let mut b = Builder::new(self);
        let residue = p % 4;
        if residue == 1 {
            b.step(
                Rule::InertInGaussian,
                vec![val("p mod 4", 1)],
                format!("{p} ≡ 1 (mod 4) splits in Q(mu_4); no obstruction"),
                Check::Congruence { p, modulus: 4, residue },
            );
            return Ok((GateConclusion::NoObstruction, b.trace));
        }
        for r in [Rule::NilpotentTwoGroup, Rule::OnePrimeAboveP, Rule::StageTower, Rule::MaximalityContradiction] {
            self.require(r)?;
        }
        let ax = b.ledger_true(&FieldTag::Rationals, "no_odd_abelian_unramified_outside_2")?;
        let s_nil = b.step(
            Rule::NilpotentTwoGroup,
            vec![ax, hyp("G = Gal(Q(A[2])/Q) is nilpotent"), hyp(&format!("inertia at {p} has order at most 2"))],
            "G is a 2-group".to_string(),
            Check::Logic,
        );
        let primes = splitting_in_cyclotomic(2, p)?;
        let s_inert = b.step(
            Rule::InertInGaussian,
            vec![val("p mod 4", 3), val(&format!("primes above {p} in Q(mu_4)"), primes)],
            format!("{p} is inert in Q(mu_4)"),
            Check::All {
                checks: vec![
                    Check::Congruence { p, modulus: 4, residue },
                    Check::Splitting { ell: 2, p, primes },
                ],
            },
        );
        let kw = b.ledger_true(&FieldTag::Rationals, "kronecker_weber")?;
        let two_cap = cyclotomic_cap(2, 1)?;
        let s_one = b.step(
            Rule::OnePrimeAboveP,
            vec![prior(s_nil), prior(s_inert), kw],
            format!(
                "the maximal abelian quotient of G cuts out a subfield of Q(mu_{}) where {p} is inert, so the decomposition group at {p} is G",
                1u64 << two_cap
            ),
            Check::CyclotomicCap { p: 2, n: 1, cap: two_cap },
        );
        let model = tower_model(2, 1, 1)?;
        let run = model.tower(TOWER_STEPS, &KernelStrategy::FlagM1)?;
        let s_tower = b.step(
            Rule::StageTower,
            vec![prior(s_one), hyp(run.assumption)],
            "an isogenous variety of strictly larger effective stage exists".to_string(),
            Check::Tower { ell: 2, t: 1, a: 1, steps: TOWER_STEPS, run: run.steps.clone() },
        );
        b.step(
            Rule::MaximalityContradiction,
            vec![prior(s_tower)],
            format!("no semistable abelian variety over Q with good reduction outside {p} has nilpotent G"),
            Check::Logic,
        );
        Ok((GateConclusion::Nonexistent, b.trace))
    }

    /// Recomputes every step's side condition, checks that each ledger
    /// premise matches the ledger, that step references point backwards,
    /// and that every anchor is in the citation list.
    pub fn replay(&self, trace: &ProofTrace) -> std::result::Result<(), ReplayError> {
        for (i, s) in trace.steps.iter().enumerate() {
            let fail = |msg: String| ReplayError { step: s.index, msg };
            if s.index != i + 1 {
                return Err(fail(format!("expected index {}", i + 1)));
            }
            if s.anchor != s.rule.anchor() || self.data.citations.get(&s.anchor).is_none() {
                return Err(fail(format!("anchor {} not in citation list", s.anchor)));
            }
            for p in &s.premises {
                match p {
                    Premise::Step { index } if *index == 0 || *index >= s.index => {
                        return Err(fail(format!("premise #{index} is not an earlier step")));
                    }
                    Premise::Ledger { field, invariant, value, citation } => {
                        let e = self.data.ledger.lookup(field, invariant).map_err(|e| fail(e.to_string()))?;
                        if e.value.to_string() != *value || e.citation != *citation {
                            return Err(fail(format!("ledger {invariant} of {field} changed")));
                        }
                    }
                    _ => {}
                }
            }
            self.verify(&s.check).map_err(fail)?;
        }
        Ok(())
    }

    fn verify(&self, check: &Check) -> std::result::Result<(), String> {
        let expect = |ok: bool, what: &str| if ok { Ok(()) } else { Err(format!("{what} does not recompute")) };
        let e = |x: &dyn fmt::Display| x.to_string();
        match check {
            Check::Logic => Ok(()),
            Check::DegreeCap { ell, p, rd, cap } => {
                let b = fontaine_joshi_bound(*ell, 1, &[(*p, 1)]).map_err(|x| e(&x))?;
                let c = max_degree(&self.data.table, &b).map_err(|x| e(&x))?;
                expect(b.to_string() == *rd && c == *cap, "degree cap")
            }
            Check::Quotient { numerator, denominator, quotient } => {
                expect(*denominator > 0 && numerator / denominator == *quotient, "quotient")
            }
            Check::Below { value, limit } => expect(value < limit, "inequality"),
            Check::Splitting { ell, p, primes } => {
                expect(splitting_in_cyclotomic(*ell, *p).map_err(|x| e(&x))? == *primes, "splitting count")
            }
            Check::Layer { ell, p, candidates } => {
                let layer = abelian_layer(*ell, *p).map_err(|x| e(&x))?;
                expect(layer.candidates.as_ref() == Some(candidates), "abelian layer")
            }
            Check::EllPowers { ell, bound, orders } => expect(ell_powers(*ell, *bound) == *orders, "prime-power orders"),
            Check::CandidateOrders { ell, bound, orders } => {
                let got: Vec<u64> = candidate_orders(*ell, *bound).into_iter().collect();
                expect(got == *orders, "candidate orders")
            }
            Check::TwoModFour { orders } => expect(orders.iter().all(|m| m % 4 == 2), "twice-odd orders"),
            Check::Coprime { values, modulus } => {
                expect(values.iter().all(|v| v.gcd(modulus) == 1), "coprimality")
            }
            Check::PowersOfTwo { values } => expect(values.iter().all(|v| v.is_power_of_two()), "powers of two"),
            Check::KnownFieldRd { disc, degree, rd, cap, needed } => {
                let f = Factorization::parse(disc).map_err(|x| e(&x))?;
                let r = known_field_rd(&f, *degree).map_err(|x| e(&x))?;
                let c = max_degree(&self.data.table, &r).map_err(|x| e(&x))?;
                expect(r.to_string() == *rd && c == *cap && needed > cap, "known-field degree cap")
            }
            Check::CyclotomicCap { p, n, cap } => {
                expect(cyclotomic_cap(*p, *n).map_err(|x| e(&x))? == *cap, "cyclotomic cap")
            }
            Check::ResidueField { field, q } => {
                expect(residue_field_at_two(field).map_err(|x| e(&x))? == *q, "residue field")
            }
            Check::ResidueRoots { q, max_n, roots } => expect(residue_roots(*q, *max_n) == *roots, "residue roots"),
            Check::ClassNumber { disc, h } => {
                expect(quadratic_class_number(*disc).map_err(|x| e(&x))? == *h, "class number")
            }
            Check::GaussianDegrees { cap, degrees } => expect(gaussian_degrees(*cap) == *degrees, "degree list"),
            Check::Congruence { p, modulus, residue } => expect(*modulus > 0 && p % modulus == *residue, "congruence"),
            Check::Tower { ell, t, a, steps, run } => {
                let m = tower_model(*ell, *t, *a).map_err(|x| e(&x))?;
                let got = m.tower(*steps, &KernelStrategy::FlagM1).map_err(|x| e(&x))?;
                expect(got.steps == *run, "tower")
            }
            Check::Contained { ell, p, field } => {
                let (v, _) = self.run(&Scenario::new(*ell, *p)).map_err(|x| e(&x))?;
                expect(v == Verdict::Contained(field.clone()), "containment verdict")
            }
            Check::All { checks } => checks.iter().try_for_each(|c| self.verify(c)),
        }
    }
}

fn quadratic_disc(field: &FieldTag) -> i64 {
    let d = match field {
        FieldTag::Quadratic(d) => *d,
        FieldTag::Cyclotomic(4) => -1,
        FieldTag::Cyclotomic(3) => -3,
        _ => return 0,
    };
    if d.rem_euclid(4) == 1 {
        d
    } else {
        4 * d
    }
}

pub fn run_odd(ell: u64, p: u64) -> Result<(Verdict, ProofTrace)> {
    Engine::bundled().run_odd(&Scenario::new(ell, p))
}

pub fn run_two(p: u64) -> Result<(Verdict, ProofTrace)> {
    Engine::bundled().run_two(&Scenario::new(2, p))
}

pub fn single_bad_prime(p: u64) -> Result<ProofTrace> {
    Engine::bundled().single_bad_prime(p)
}

pub fn nilpotent_gate(p: u64) -> Result<(GateConclusion, ProofTrace)> {
    Engine::bundled().nilpotent_gate(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[u64]) -> BTreeSet<u64> {
        xs.iter().copied().collect()
    }

    #[test]
    fn candidate_order_examples() {
        assert_eq!(candidate_orders(3, 34), set(&[12, 21, 24, 30]));
        assert_eq!(candidate_orders(5, 42), set(&[30]));
        assert_eq!(candidate_orders(3, 7), set(&[]));
        assert_eq!(candidate_orders(5, 10), set(&[]));
    }

    #[test]
    fn residue_roots_examples() {
        assert!(residue_root_check(3, 4));
        assert!(!residue_root_check(3, 2));
        assert!(residue_root_check(1, 2));
        assert!(!residue_root_check(5, 2));
    }

    #[test]
    fn residue_fields_at_two() {
        let f = |s: &str| residue_field_at_two(&s.parse().unwrap()).unwrap();
        assert_eq!(f("Q(sqrt(-3))"), 4);
        assert_eq!(f("Q(sqrt(3))"), 2);
        assert_eq!(f("Q(sqrt(7))"), 2);
        assert_eq!(f("Q(sqrt(-7))"), 2);
        assert_eq!(f("Q(mu_4, sqrt(7))"), 2);
        assert_eq!(f("Q(mu_4, sqrt(3))"), 4);
        assert_eq!(f("Q(sqrt(5))"), 4);
    }

    #[test]
    fn odd_runs_are_contained() {
        for (ell, p) in ODD_PAIRS {
            let (v, t) = run_odd(ell, p).unwrap();
            assert_eq!(v, Verdict::Contained(Engine::target_field(ell, p).unwrap()), "({ell}, {p})");
            Engine::bundled().replay(&t).unwrap();
        }
        let (_, t) = run_odd(3, 2).unwrap();
        assert!(t.contains_conclusion("|H| ≤ 7 < 12"));
        let (_, t) = run_odd(5, 3).unwrap();
        assert!(t.steps.iter().any(|s| s.rule == Rule::OrderTwoQuotient && s.conclusion.contains("|H| = 30")));
        let (_, t) = run_odd(3, 5).unwrap();
        assert!(t.contains_conclusion("rd(E) = 3^(7/6)*5^(2/3)"));
        assert!(t.contains_conclusion("[L:Q] ≤ 22 < 42"));
        assert!(t.steps.iter().any(|s| s.rule == Rule::OddClassNumber && s.conclusion.contains("{4, 8}")));
    }

    #[test]
    fn two_runs_are_contained() {
        for p in TWO_PRIMES {
            let (v, t) = run_two(p).unwrap();
            assert_eq!(v, Verdict::Contained(Engine::target_field(2, p).unwrap()));
            Engine::bundled().replay(&t).unwrap();
        }
        let (_, t) = run_two(3).unwrap();
        assert!(t.contains_conclusion("[L:Q] ≤ 10"));
        let (_, t) = run_two(7).unwrap();
        assert!(t.contains_conclusion("[L:Q] ∈ {12, 20}"));
        assert!(t.contains_conclusion("residue_root_check(n, 2) = false"));
        assert!(matches!(run_two(5), Err(ExclusionError::Scope(_))));
        assert!(matches!(run_odd(3, 7), Err(ExclusionError::Scope(_))));
    }

    #[test]
    fn every_case_rule_is_needed() {
        let data = DataSet::bundled();
        for rule in Rule::CASE_RULES {
            let engine = Engine::new(data.clone(), RuleSet::without(rule));
            let stuck = ODD_PAIRS
                .iter()
                .map(|&(l, p)| engine.run_odd(&Scenario::new(l, p)).unwrap().0)
                .chain(TWO_PRIMES.iter().map(|&p| engine.run_two(&Scenario::new(2, p)).unwrap().0))
                .any(|v| matches!(v, Verdict::Stuck(_)));
            assert!(stuck, "disabling {rule} left every verdict closed");
        }
    }

    #[test]
    fn gates() {
        for p in [2, 3, 5, 7] {
            let t = single_bad_prime(p).unwrap();
            Engine::bundled().replay(&t).unwrap();
            assert_eq!(t.steps.last().unwrap().rule, Rule::MaximalityContradiction);
        }
        assert!(single_bad_prime(11).is_err());
        assert_eq!(nilpotent_gate(7).unwrap().0, GateConclusion::Nonexistent);
        assert_eq!(nilpotent_gate(11).unwrap().0, GateConclusion::Nonexistent);
        assert_eq!(nilpotent_gate(17).unwrap().0, GateConclusion::NoObstruction);
        assert!(nilpotent_gate(2).is_err());
    }

    #[test]
    fn replay_catches_tampering() {
        let engine = Engine::bundled();
        let (_, mut t) = run_odd(3, 5).unwrap();
        for s in &mut t.steps {
            if let Check::CandidateOrders { orders, .. } = &mut s.check {
                orders.pop();
            }
        }
        assert!(engine.replay(&t).is_err());
        let (_, t) = run_two(7).unwrap();
        let back = ProofTrace::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        engine.replay(&back).unwrap();
    }
}
