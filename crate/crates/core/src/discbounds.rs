//! Discriminant bounds for division fields of semistable abelian varieties
//! and degree caps read from root-discriminant tables.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_traits::One;
use thiserror::Error;

use crate::exactnum::{
    int, is_prime, parse_rat, powprod_cmp, Factorization, NumError, PowProduct, Rat,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscError {
    #[error("root discriminant {0} exceeds every table threshold")]
    Unbounded(String),
    #[error("the discriminant table is empty")]
    EmptyTable,
    #[error("table line {line}: {msg}")]
    Table { line: usize, msg: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

type Result<T> = std::result::Result<T, DiscError>;

/// Sorted `(threshold, max_degree)` rows: any field with root discriminant
/// below `threshold` has degree at most `max_degree`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OdlyzkoTable {
    rows: Vec<(Rat, u64)>,
}

impl OdlyzkoTable {
    pub fn new(rows: Vec<(Rat, u64)>) -> Result<Self> {
        for (i, w) in rows.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(DiscError::Table {
                    line: i + 2,
                    msg: "thresholds must be strictly increasing".into(),
                });
            }
            if w[1].1 < w[0].1 {
                return Err(DiscError::Table { line: i + 2, msg: "max degrees must be non-decreasing".into() });
            }
        }
        Ok(OdlyzkoTable { rows })
    }

    /// Parses `<rd_threshold_decimal>,<max_degree>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Vec<(Rat, u64)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| DiscError::Table { line: line_no, msg: msg.to_string() };
            let (rd, deg) = line.split_once(',').ok_or_else(|| bad("expected <threshold>,<degree>"))?;
            let rd = parse_rat(rd).map_err(|_| bad("threshold is not a decimal"))?;
            let deg: u64 = deg.trim().parse().map_err(|_| bad("degree is not an integer"))?;
            if rd <= int(0) {
                return Err(bad("threshold must be positive"));
            }
            if let Some((prev, prev_deg)) = rows.last() {
                match rd.cmp(prev) {
                    Ordering::Equal => return Err(bad("duplicate threshold")),
                    Ordering::Less => return Err(bad("rows are not sorted by threshold")),
                    Ordering::Greater => {}
                }
                if deg < *prev_deg {
                    return Err(bad("max degrees must be non-decreasing"));
                }
            }
            rows.push((rd, deg));
        }
        Ok(OdlyzkoTable { rows })
    }

    pub fn rows(&self) -> &[(Rat, u64)] {
        &self.rows
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DegreeCap {
    Bounded(u64),
    Unbounded,
}

impl fmt::Display for DegreeCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegreeCap::Bounded(d) => write!(f, "{d}"),
            DegreeCap::Unbounded => write!(f, "UNBOUNDED"),
        }
    }
}

/// Bound on the root discriminant of `Q(A[ℓⁿ])` together with the degree cap it implies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundReport {
    pub ell: u64,
    /// Bad primes with their effective stage of inertia.
    pub bad: Vec<(u64, u32)>,
    pub n: u32,
    pub bound: PowProduct,
    pub degree_cap: DegreeCap,
}

/// `ℓ^{n + 1/(ℓ−1)} · ∏ p^{1 − 1/ℓ^{n − n₀ + 1}}` over the bad primes `p` with stages `n₀`.
pub fn fontaine_joshi_bound(ell: u64, n: u32, bad: &[(u64, u32)]) -> Result<PowProduct> {
    if !is_prime(ell) {
        return Err(DiscError::Precondition(format!("{ell} is not prime")));
    }
    if n < 1 {
        return Err(DiscError::Precondition("level n must be at least 1".into()));
    }
    let mut factors = vec![(int(ell as i64), int(n as i64) + Rat::new(BigInt::one(), BigInt::from(ell - 1)))];
    let mut seen = Vec::new();
    for &(p, stage) in bad {
        if p == ell {
            return Err(DiscError::Precondition(format!("ell = {ell} must not be a bad prime")));
        }
        if !is_prime(p) {
            return Err(DiscError::Precondition(format!("bad prime {p} is not prime")));
        }
        if seen.contains(&p) {
            return Err(DiscError::Precondition(format!("bad prime {p} listed twice")));
        }
        seen.push(p);
        if stage < 1 || stage > n {
            return Err(DiscError::Precondition(format!("need n >= n0 >= 1, got n = {n}, n0 = {stage}")));
        }
        let tame_degree = BigInt::from(ell).pow(n - stage + 1);
        let exp = Rat::one() - Rat::new(BigInt::one(), tame_degree);
        factors.push((int(p as i64), exp));
    }
    Ok(PowProduct::new(factors)?)
}

/// Degree cap of the first row whose threshold is at least `rd`.
pub fn max_degree(table: &OdlyzkoTable, rd: &PowProduct) -> Result<u64> {
    if table.rows.is_empty() {
        return Err(DiscError::EmptyTable);
    }
    table
        .rows
        .iter()
        .find(|(threshold, _)| rd.cmp_rat(threshold) != Ordering::Greater)
        .map(|&(_, deg)| deg)
        .ok_or_else(|| DiscError::Unbounded(rd.to_string()))
}

pub fn degree_cap(table: &OdlyzkoTable, rd: &PowProduct) -> Result<DegreeCap> {
    match max_degree(table, rd) {
        Ok(d) => Ok(DegreeCap::Bounded(d)),
        Err(DiscError::Unbounded(_)) => Ok(DegreeCap::Unbounded),
        Err(e) => Err(e),
    }
}

/// Root discriminant `|disc|^{1/degree}` of a field with known discriminant.
pub fn known_field_rd(disc: &Factorization, degree: u64) -> Result<PowProduct> {
    if degree < 1 {
        return Err(DiscError::Domain("degree must be at least 1".into()));
    }
    let inv = Rat::new(BigInt::one(), BigInt::from(degree));
    let factors = disc.factors.iter().map(|&(p, e)| (int(p as i64), int(e as i64) * &inv));
    Ok(PowProduct::new(factors)?)
}

/// `known_field_rd` from a plain integer; zero is rejected.
pub fn known_field_rd_int(disc: i64, degree: u64) -> Result<PowProduct> {
    let f = Factorization::of(disc).ok_or_else(|| DiscError::Domain("discriminant is zero".into()))?;
    known_field_rd(&f, degree)
}

/// The `(ℓ, p)` pairs of the division-field table, in column order.
pub const TABLE_PAIRS: [(u64, u64); 6] = [(2, 3), (2, 7), (3, 2), (3, 5), (5, 2), (5, 3)];

/// Bounds at level one with stage one for each table pair.
pub fn division_field_table(table: &OdlyzkoTable) -> Result<Vec<BoundReport>> {
    if table.rows.is_empty() {
        return Err(DiscError::EmptyTable);
    }
    TABLE_PAIRS
        .iter()
        .map(|&(ell, p)| {
            let bad = vec![(p, 1)];
            let bound = fontaine_joshi_bound(ell, 1, &bad)?;
            let degree_cap = degree_cap(table, &bound)?;
            Ok(BoundReport { ell, bad, n: 1, bound, degree_cap })
        })
        .collect()
}

/// Exact check that `value − 1/100 < bound ≤ value`, i.e. the
/// two-decimal value is the ceiling of the exact bound.
pub fn is_two_decimal_ceiling(bound: &PowProduct, value: &Rat) -> bool {
    let below = value - Rat::new(BigInt::one(), BigInt::from(100));
    bound.cmp_rat(value) != Ordering::Greater && bound.cmp_rat(&below) == Ordering::Greater
}

impl BoundReport {
    pub fn cmp_bound(&self, other: &BoundReport) -> Ordering {
        powprod_cmp(&self.bound, &other.bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::rat;
    use proptest::prelude::*;

    fn table() -> OdlyzkoTable {
        OdlyzkoTable::parse(include_str!("../data/odlyzko.txt")).unwrap()
    }

    fn pp(factors: &[(i64, i64, i64)]) -> PowProduct {
        PowProduct::new(factors.iter().map(|&(b, n, d)| (int(b), rat(n, d)))).unwrap()
    }

    #[test]
    fn bound_examples() {
        assert_eq!(fontaine_joshi_bound(2, 1, &[(3, 1)]).unwrap(), pp(&[(2, 2, 1), (3, 1, 2)]));
        assert_eq!(fontaine_joshi_bound(5, 1, &[(3, 1)]).unwrap(), pp(&[(5, 5, 4), (3, 4, 5)]));
        let b = fontaine_joshi_bound(3, 2, &[(2, 1)]).unwrap();
        assert_eq!(b, pp(&[(3, 5, 2), (2, 8, 9)]));
        assert_eq!(b.to_decimal(2), "28.87");
        assert!(matches!(fontaine_joshi_bound(3, 1, &[(3, 1)]), Err(DiscError::Precondition(_))));
        assert!(fontaine_joshi_bound(3, 1, &[(2, 2)]).is_err());
        assert!(fontaine_joshi_bound(3, 1, &[(2, 1), (2, 1)]).is_err());
    }

    #[test]
    fn degree_lookups() {
        let t = table();
        assert_eq!(max_degree(&t, &pp(&[(2, 2, 1), (3, 1, 2)])).unwrap(), 10);
        assert_eq!(max_degree(&t, &pp(&[(3, 7, 6), (5, 2, 3)])).unwrap(), 22);
        assert_eq!(max_degree(&t, &pp(&[(5, 5, 4), (3, 4, 5)])).unwrap(), 168);
        assert!(matches!(max_degree(&t, &pp(&[(19, 1, 1)])), Err(DiscError::Unbounded(_))));
        let empty = OdlyzkoTable::new(vec![]).unwrap();
        assert_eq!(max_degree(&empty, &PowProduct::one()), Err(DiscError::EmptyTable));
    }

    #[test]
    fn known_discriminants() {
        let e = Factorization::parse("3^7*5^4").unwrap();
        assert_eq!(known_field_rd(&e, 6).unwrap(), pp(&[(3, 7, 6), (5, 2, 3)]));
        assert_eq!(known_field_rd_int(1, 1).unwrap(), PowProduct::one());
        assert_eq!(known_field_rd_int(-675, 3).unwrap(), pp(&[(3, 1, 1), (5, 2, 3)]));
        assert!(known_field_rd_int(0, 3).is_err());
        assert!(known_field_rd(&e, 0).is_err());
    }

    #[test]
    fn table_rows() {
        let rows = division_field_table(&table()).unwrap();
        let expected = [
            ("6.93", 10, "2^2*3^(1/2)"),
            ("10.59", 22, "2^2*7^(1/2)"),
            ("8.25", 14, "2^(2/3)*3^(3/2)"),
            ("15.20", 68, "3^(3/2)*5^(2/3)"),
            ("13.02", 40, "2^(4/5)*5^(5/4)"),
            ("18.01", 168, "3^(4/5)*5^(5/4)"),
        ];
        for (row, (value, cap, sym)) in rows.iter().zip(expected) {
            assert_eq!(row.bound.to_string(), sym);
            assert_eq!(row.degree_cap, DegreeCap::Bounded(cap));
            assert!(is_two_decimal_ceiling(&row.bound, &parse_rat(value).unwrap()), "{sym} vs {value}");
        }
        assert_eq!(rows[2].bound.to_decimal(4), "8.2484");
        assert_eq!(rows[3].bound.to_decimal(3), "15.194");
        assert_eq!(rows[4].bound.to_decimal(3), "13.018");
    }

    #[test]
    fn table_loader_rejects_bad_input() {
        assert!(OdlyzkoTable::parse("6.93,10\n6.93,12\n").is_err());
        assert!(OdlyzkoTable::parse("8.25,14\n6.93,10\n").is_err());
        assert!(OdlyzkoTable::parse("6.93;10\n").is_err());
        assert!(OdlyzkoTable::parse("6.93,x\n").is_err());
        assert!(OdlyzkoTable::parse("6.93,10\n8.25,8\n").is_err());
        let t = OdlyzkoTable::parse("# header\n\n6.93,10 # trailing\n").unwrap();
        assert_eq!(t.rows(), &[(rat(693, 100), 10)]);
    }

    proptest! {
        #[test]
        fn bound_monotone_in_level_and_stage(ell in prop::sample::select(vec![2u64, 3, 5, 7]),
                                             p in prop::sample::select(vec![2u64, 3, 5, 7, 11]),
                                             n in 1u32..4, n0 in 1u32..4) {
            prop_assume!(ell != p && n0 <= n);
            let base = fontaine_joshi_bound(ell, n, &[(p, n0)]).unwrap();
            let higher_level = fontaine_joshi_bound(ell, n + 1, &[(p, n0)]).unwrap();
            prop_assert_eq!(powprod_cmp(&higher_level, &base), Ordering::Greater);
            if n0 > 1 {
                let lower_stage = fontaine_joshi_bound(ell, n, &[(p, n0 - 1)]).unwrap();
                prop_assert_eq!(powprod_cmp(&lower_stage, &base), Ordering::Greater);
            }
        }

        #[test]
        fn max_degree_monotone(a in 1i64..2000, b in 1i64..2000) {
            let t = table();
            let (x, y) = (rat(a.min(b), 100), rat(a.max(b), 100));
            let dx = degree_cap(&t, &PowProduct::from_rat(x).unwrap()).unwrap();
            let dy = degree_cap(&t, &PowProduct::from_rat(y).unwrap()).unwrap();
            match (dx, dy) {
                (DegreeCap::Bounded(p), DegreeCap::Bounded(q)) => prop_assert!(p <= q),
                (DegreeCap::Unbounded, DegreeCap::Bounded(_)) => prop_assert!(false),
                _ => {}
            }
        }
    }
}
