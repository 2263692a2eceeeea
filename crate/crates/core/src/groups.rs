//! Finite permutation groups small enough to list element by element, with
//! the subgroup searches needed to check Sylow counts, abelian quotients and
//! quotients of prime-square order on concrete examples.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::exactnum::{factor_u64, is_prime};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("group has more than {0} elements")]
    TooLarge(usize),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid permutation: {0}")]
    Invalid(String),
    #[error("catalog line {line}: {msg}")]
    Catalog { line: usize, msg: String },
}

type Result<T> = std::result::Result<T, GroupError>;

/// Largest group whose elements are listed.
pub const MAX_ORDER: usize = 100_000;
/// Largest group on which subgroup searches run.
pub const MAX_SEARCH_ORDER: usize = 2000;

/// A permutation of `{0, …, n−1}` stored as its image list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm(Vec<u32>);

impl Perm {
    pub fn identity(n: usize) -> Perm {
        Perm((0..n as u32).collect())
    }

    pub fn from_images(images: Vec<u32>) -> Result<Perm> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i as usize >= n || std::mem::replace(&mut seen[i as usize], true) {
                return Err(GroupError::Invalid(format!("{images:?} is not a bijection")));
            }
        }
        Ok(Perm(images))
    }

    /// Parses 1-based cycle notation such as `(1 2 3)(4 5)`; `()` is the identity.
    pub fn parse_cycles(s: &str, degree: usize) -> Result<Perm> {
        let mut images: Vec<u32> = (0..degree as u32).collect();
        let s = s.trim();
        let bad = |msg: &str| GroupError::Invalid(format!("{s:?}: {msg}"));
        let mut rest = s;
        while !rest.is_empty() {
            let open = rest.strip_prefix('(').ok_or_else(|| bad("expected '('"))?;
            let close = open.find(')').ok_or_else(|| bad("unbalanced parentheses"))?;
            let points = open[..close]
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>().map_err(|_| bad("non-numeric point")))
                .collect::<Result<Vec<_>>>()?;
            for w in 0..points.len() {
                let (a, b) = (points[w], points[(w + 1) % points.len()]);
                if a == 0 || a > degree {
                    return Err(bad("point outside 1..degree"));
                }
                images[a - 1] = (b - 1) as u32;
            }
            rest = open[close + 1..].trim_start();
        }
        Perm::from_images(images)
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn images(&self) -> &[u32] {
        &self.0
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm(other.0.iter().map(|&i| self.0[i as usize]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0u32; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j as usize] = i as u32;
        }
        Perm(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i as u32 == j)
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut seen = vec![false; self.0.len()];
        let mut any = false;
        for start in 0..self.0.len() {
            if seen[start] || self.0[start] as usize == start {
                continue;
            }
            any = true;
            write!(f, "({}", start + 1)?;
            seen[start] = true;
            let mut j = self.0[start] as usize;
            while j != start {
                write!(f, " {}", j + 1)?;
                seen[j] = true;
                j = self.0[j] as usize;
            }
            write!(f, ")")?;
        }
        if !any {
            write!(f, "()")?;
        }
        Ok(())
    }
}

/// Generated permutation group with its full element list.
#[derive(Clone, Debug)]
pub struct PermGroup {
    degree: usize,
    generators: Vec<Perm>,
    elements: Vec<Perm>,
    index: HashMap<Perm, usize>,
}

fn closure(degree: usize, gens: &[Perm], limit: usize) -> Result<Vec<Perm>> {
    let id = Perm::identity(degree);
    let mut seen: HashSet<Perm> = HashSet::from([id.clone()]);
    let mut elements = vec![id.clone()];
    let mut queue = VecDeque::from([id]);
    while let Some(x) = queue.pop_front() {
        for g in gens {
            let y = g.compose(&x);
            if seen.insert(y.clone()) {
                if elements.len() >= limit {
                    return Err(GroupError::TooLarge(limit));
                }
                elements.push(y.clone());
                queue.push_back(y);
            }
        }
    }
    Ok(elements)
}

impl PermGroup {
    pub fn new(degree: usize, generators: Vec<Perm>) -> Result<PermGroup> {
        if let Some(g) = generators.iter().find(|g| g.degree() != degree) {
            return Err(GroupError::Invalid(format!("{g} does not act on {degree} points")));
        }
        let mut elements = closure(degree, &generators, MAX_ORDER)?;
        elements[1..].sort();
        let index = elements.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        Ok(PermGroup { degree, generators, elements, index })
    }

    /// `gens` in 1-based cycle notation, e.g. `["(1 2)", "(1 2 3)"]`.
    pub fn from_cycles(degree: usize, gens: &[&str]) -> Result<PermGroup> {
        let gens = gens.iter().map(|g| Perm::parse_cycles(g, degree)).collect::<Result<_>>()?;
        PermGroup::new(degree, gens)
    }

    /// Cyclic group generated by an `n`-cycle.
    pub fn cyclic(n: usize) -> PermGroup {
        let images = (0..n as u32).map(|i| (i + 1) % n as u32).collect();
        PermGroup::new(n.max(1), vec![Perm(images)]).expect("cyclic group")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn generators(&self) -> &[Perm] {
        &self.generators
    }

    pub fn elements(&self) -> &[Perm] {
        &self.elements
    }

    pub fn order(&self) -> u64 {
        self.elements.len() as u64
    }

    pub fn contains(&self, p: &Perm) -> bool {
        self.index.contains_key(p)
    }

    pub fn is_abelian(&self) -> bool {
        self.generators.iter().enumerate().all(|(i, a)| {
            self.generators[i + 1..].iter().all(|b| a.compose(b) == b.compose(a))
        })
    }

    /// Normal closure of the commutators of the generators.
    pub fn derived_subgroup(&self) -> Vec<Perm> {
        let mut gens = Vec::new();
        for a in &self.generators {
            for b in &self.generators {
                let c = a.compose(b).compose(&a.inverse()).compose(&b.inverse());
                if !c.is_identity() {
                    gens.push(c);
                }
            }
        }
        loop {
            let sub = closure(self.degree, &gens, MAX_ORDER).expect("subgroup of a listed group");
            let members: HashSet<&Perm> = sub.iter().collect();
            let extra: Vec<Perm> = gens
                .iter()
                .flat_map(|h| {
                    self.generators.iter().map(move |g| g.compose(h).compose(&g.inverse()))
                })
                .filter(|c| !members.contains(c))
                .collect();
            if extra.is_empty() {
                return sub;
            }
            gens.extend(extra);
        }
    }

    pub fn abelianization_order(&self) -> u64 {
        self.order() / self.derived_subgroup().len() as u64
    }

    pub fn is_ell_group(&self, ell: u64) -> bool {
        factor_u64(self.order()).iter().all(|&(q, _)| q == ell)
    }

    fn table(&self) -> Result<Table> {
        let n = self.elements.len();
        if n > MAX_SEARCH_ORDER {
            return Err(GroupError::TooLarge(MAX_SEARCH_ORDER));
        }
        let mut mul = vec![0u32; n * n];
        for (i, a) in self.elements.iter().enumerate() {
            for (j, b) in self.elements.iter().enumerate() {
                mul[i * n + j] = self.index[&a.compose(b)] as u32;
            }
        }
        let inv = self.elements.iter().map(|a| self.index[&a.inverse()] as u32).collect();
        Ok(Table { n, mul, inv })
    }

    fn subgroup_perms(&self, sub: &Subgroup) -> Vec<Perm> {
        sub.members.iter().map(|&i| self.elements[i as usize].clone()).collect()
    }

    /// Every subgroup of `ℓ`-power order, grouped by exponent of `ℓ`.
    fn ell_subgroup_layers(&self, ell: u64) -> Result<(Table, Vec<Vec<Subgroup>>)> {
        let t = self.table()?;
        let mut layers = vec![vec![Subgroup::from_members(t.n, vec![0])]];
        loop {
            let mut next: Vec<Subgroup> = Vec::new();
            let mut seen: HashSet<Vec<u64>> = HashSet::new();
            for h in layers.last().unwrap() {
                for g in 0..t.n as u32 {
                    if h.contains(g) || !h.contains(t.pow(g, ell)) || !t.normalizes(g, h) {
                        continue;
                    }
                    let k = t.extend(h, g, ell);
                    if seen.insert(k.bits.clone()) {
                        next.push(k);
                    }
                }
            }
            if next.is_empty() {
                return Ok((t, layers));
            }
            layers.push(next);
        }
    }

    /// Number of inclusion-maximal `ℓ`-subgroups.
    pub fn sylow_count(&self, ell: u64) -> Result<u64> {
        self.require_divides(ell)?;
        let (_, layers) = self.ell_subgroup_layers(ell)?;
        Ok(maximal_subgroups(&layers).len() as u64)
    }

    /// The maximal `ℓ`-subgroups, each as a sorted element list.
    pub fn sylow_subgroups(&self, ell: u64) -> Result<Vec<Vec<Perm>>> {
        self.require_divides(ell)?;
        let (_, layers) = self.ell_subgroup_layers(ell)?;
        Ok(maximal_subgroups(&layers).iter().map(|s| self.subgroup_perms(s)).collect())
    }

    fn require_divides(&self, ell: u64) -> Result<()> {
        if !is_prime(ell) || self.order() % ell != 0 {
            return Err(GroupError::Precondition(format!(
                "{ell} is not a prime divisor of |G| = {}",
                self.order()
            )));
        }
        Ok(())
    }

    /// Whether a subgroup given by its elements is stable under conjugation.
    pub fn is_normal(&self, sub: &[Perm]) -> bool {
        let members: HashSet<&Perm> = sub.iter().collect();
        self.generators.iter().all(|g| {
            let gi = g.inverse();
            sub.iter().all(|h| members.contains(&g.compose(h).compose(&gi)))
        })
    }

    /// A normal subgroup of index `ℓ²` in an `ℓ`-group, if one exists.
    ///
    /// Such a subgroup contains the derived subgroup, and subgroups between
    /// the two are normal, so a chain grown upward from the derived subgroup
    /// one `ℓ`-step at a time reaches index `ℓ²` exactly when one exists.
    pub fn prime_square_quotient(&self, ell: u64) -> Result<Option<Vec<Perm>>> {
        if !is_prime(ell) || !self.is_ell_group(ell) {
            return Err(GroupError::Precondition(format!("G is not a {ell}-group")));
        }
        if self.order() < ell * ell {
            return Ok(None);
        }
        let target = self.order() / (ell * ell);
        let t = self.table()?;
        let derived: Vec<u32> =
            self.derived_subgroup().iter().map(|p| self.index[p] as u32).collect();
        let mut k = Subgroup::from_members(t.n, derived);
        while (k.members.len() as u64) < target {
            let g = (0..t.n as u32)
                .find(|&g| !k.contains(g) && k.contains(t.pow(g, ell)) && t.normalizes(g, &k));
            match g {
                Some(g) => k = t.extend(&k, g, ell),
                None => return Ok(None),
            }
        }
        if k.members.len() as u64 != target {
            return Ok(None);
        }
        let perms = self.subgroup_perms(&k);
        Ok(self.is_normal(&perms).then_some(perms))
    }
}

#[derive(Clone, Debug)]
struct Subgroup {
    bits: Vec<u64>,
    members: Vec<u32>,
}

impl Subgroup {
    fn from_members(n: usize, mut members: Vec<u32>) -> Subgroup {
        members.sort_unstable();
        members.dedup();
        let mut bits = vec![0u64; n.div_ceil(64)];
        for &m in &members {
            bits[m as usize / 64] |= 1 << (m % 64);
        }
        Subgroup { bits, members }
    }

    fn contains(&self, i: u32) -> bool {
        self.bits[i as usize / 64] >> (i % 64) & 1 == 1
    }

    fn is_subset_of(&self, other: &Subgroup) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }
}

struct Table {
    n: usize,
    mul: Vec<u32>,
    inv: Vec<u32>,
}

impl Table {
    fn mul(&self, a: u32, b: u32) -> u32 {
        self.mul[a as usize * self.n + b as usize]
    }

    fn pow(&self, g: u32, e: u64) -> u32 {
        (0..e).fold(0, |acc, _| self.mul(acc, g))
    }

    fn normalizes(&self, g: u32, h: &Subgroup) -> bool {
        let gi = self.inv[g as usize];
        h.members.iter().all(|&x| h.contains(self.mul(self.mul(g, x), gi)))
    }

    /// `⟨H, g⟩ = ⋃ gⁱH` when `g` normalizes `H` and `g^ℓ ∈ H`.
    fn extend(&self, h: &Subgroup, g: u32, ell: u64) -> Subgroup {
        let mut members = Vec::with_capacity(h.members.len() * ell as usize);
        let mut gi = 0u32;
        for _ in 0..ell {
            members.extend(h.members.iter().map(|&x| self.mul(gi, x)));
            gi = self.mul(gi, g);
        }
        Subgroup::from_members(self.n, members)
    }
}

fn maximal_subgroups(layers: &[Vec<Subgroup>]) -> Vec<&Subgroup> {
    let mut out = Vec::new();
    for (k, layer) in layers.iter().enumerate() {
        for h in layer {
            let covered = layers
                .get(k + 1)
                .is_some_and(|up| up.iter().any(|big| h.is_subset_of(big)));
            if !covered {
                out.push(h);
            }
        }
    }
    out
}

/// True unless `|G| = 2n` with `n` odd and `G` has no quotient of order 2.
pub fn check_g1(g: &PermGroup) -> bool {
    g.order() % 4 != 2 || g.abelianization_order() % 2 == 0
}

/// For an `ℓ`-group: true when `|G| < ℓ²` or a normal subgroup of index `ℓ²` exists.
pub fn check_g2(g: &PermGroup, ell: u64) -> Result<bool> {
    if !is_prime(ell) || !g.is_ell_group(ell) {
        return Err(GroupError::Precondition(format!("G is not a {ell}-group")));
    }
    if g.order() < ell * ell {
        return Ok(true);
    }
    Ok(g.prime_square_quotient(ell)?.is_some())
}

/// When `G` has a single maximal `ℓ`-subgroup, whether it is normal.
pub fn unique_sylow_is_normal(g: &PermGroup, ell: u64) -> Result<Option<bool>> {
    let subs = g.sylow_subgroups(ell)?;
    Ok((subs.len() == 1).then(|| g.is_normal(&subs[0])))
}

/// Divisors `m` of `order` with `m ≡ 1 (mod ℓ)`.
pub fn sylow_admissible_counts(order: u64, ell: u64) -> Result<BTreeSet<u64>> {
    if !is_prime(ell) || order == 0 || order % ell != 0 {
        return Err(GroupError::Precondition(format!("{ell} is not a prime divisor of {order}")));
    }
    let mut out = BTreeSet::new();
    let mut d = 1;
    while d * d <= order {
        if order % d == 0 {
            for m in [d, order / d] {
                if m % ell == 1 {
                    out.insert(m);
                }
            }
        }
        d += 1;
    }
    Ok(out)
}

/// Named groups read from `<name>|<degree>|<generator cycles>` lines with
/// comma-separated generators.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    entries: Vec<(String, PermGroup)>,
}

impl Catalog {
    pub fn parse(text: &str) -> Result<Catalog> {
        let mut entries: Vec<(String, PermGroup)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| GroupError::Catalog { line: idx + 1, msg };
            let cols: Vec<&str> = line.split('|').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(err("expected 3 '|'-separated columns".into()));
            }
            let degree: usize = cols[1].parse().map_err(|_| err("bad degree".into()))?;
            let gens: Vec<&str> = cols[2].split(',').map(str::trim).collect();
            let g = PermGroup::from_cycles(degree, &gens).map_err(|e| err(e.to_string()))?;
            if entries.iter().any(|(n, _)| n == cols[0]) {
                return Err(err(format!("duplicate group name {}", cols[0])));
            }
            entries.push((cols[0].to_string(), g));
        }
        Ok(Catalog { entries })
    }

    pub fn get(&self, name: &str) -> Option<&PermGroup> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PermGroup)> {
        self.entries.iter().map(|(n, g)| (n.as_str(), g))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
