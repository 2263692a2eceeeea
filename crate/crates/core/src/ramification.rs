//! Lower and upper ramification numbering for finite Galois extensions of
//! local fields, described only through the orders of the lower ramification
//! groups, together with the local different bounds for finite flat group
//! schemes and their comparison with cyclotomic layers.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::exactnum::{fmt_rat, int, is_prime, Rat};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RamificationError {
    #[error("invalid filtration: {0}")]
    InvalidFiltration(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("conductor {0} is not an integer; the filtration cannot come from an abelian extension")]
    NonIntegralConductor(String),
}

type Result<T> = std::result::Result<T, RamificationError>;

/// Orders `g₀ ≥ g₁ ≥ … ≥ g_m` of the lower ramification groups `G_n`, with
/// `g_n = 1` for every `n > m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Filtration {
    residue_char: u64,
    orders: Vec<u64>,
}

impl Filtration {
    pub fn new(residue_char: u64, orders: Vec<u64>) -> Result<Self> {
        let f = Self::relaxed(residue_char, orders)?;
        let orders = &f.orders;
        let bad = |msg: String| Err(RamificationError::InvalidFiltration(msg));
        let g1 = f.g(1);
        let mut wild = g1;
        while wild % residue_char == 0 {
            wild /= residue_char;
        }
        if wild != 1 {
            return bad(format!("wild inertia order {g1} is not a power of {residue_char}"));
        }
        if (orders[0] / g1) % residue_char == 0 {
            return bad(format!("tame degree {} is divisible by {residue_char}", orders[0] / g1));
        }
        Ok(f)
    }

    /// Order profile checked only for shape: positive, non-increasing, and
    /// `g_{i+1} | g_i` for `i ≥ 0`. The Herbrand calculus is defined for every
    /// such profile even when no Galois extension of a `p`-adic field realizes it.
    pub fn relaxed(residue_char: u64, orders: Vec<u64>) -> Result<Self> {
        let bad = |msg: String| Err(RamificationError::InvalidFiltration(msg));
        if !is_prime(residue_char) {
            return bad(format!("residue characteristic {residue_char} is not prime"));
        }
        if orders.is_empty() {
            return bad("order list is empty".into());
        }
        if orders.contains(&0) {
            return bad("group orders must be positive".into());
        }
        if orders.windows(2).any(|w| w[1] > w[0]) {
            return bad(format!("orders {orders:?} are not non-increasing"));
        }
        let g1 = orders.get(1).copied().unwrap_or(1);
        if orders[0] % g1 != 0 {
            return bad(format!("g1 = {g1} does not divide g0 = {}", orders[0]));
        }
        if orders.windows(2).skip(1).any(|w| w[0] % w[1] != 0) {
            return bad(format!("orders {orders:?} fail g_(i+1) | g_i for i >= 1"));
        }
        Ok(Filtration { residue_char, orders })
    }

    pub fn unramified(residue_char: u64) -> Result<Self> {
        Self::new(residue_char, vec![1])
    }

    /// Tamely ramified of degree `e`: `(e, 1)`.
    pub fn tame(residue_char: u64, e: u64) -> Result<Self> {
        Self::new(residue_char, vec![e, 1])
    }

    pub fn residue_char(&self) -> u64 {
        self.residue_char
    }

    pub fn orders(&self) -> &[u64] {
        &self.orders
    }

    /// `g_n`, including the implicit trivial tail.
    pub fn g(&self, n: usize) -> u64 {
        self.orders.get(n).copied().unwrap_or(1)
    }

    pub fn e_tame(&self) -> u64 {
        self.orders[0] / self.g(1)
    }

    pub fn is_unramified(&self) -> bool {
        self.orders[0] == 1
    }

    fn last(&self) -> usize {
        self.orders.len() - 1
    }
}

fn non_negative(x: &Rat, what: &str) -> Result<()> {
    if x.is_negative() {
        return Err(RamificationError::Domain(format!("{what} = {} is negative", fmt_rat(x))));
    }
    Ok(())
}

/// Herbrand function `φ(u) = (g₁ + ⋯ + g_m + (u − m)·g_{m+1}) / g₀` for `m ≤ u ≤ m + 1`.
pub fn herbrand_phi(f: &Filtration, u: &Rat) -> Result<Rat> {
    non_negative(u, "u")?;
    let m = u.floor().to_integer();
    let last = f.last();
    let m_usize = m.to_usize();
    let listed_end = match m_usize {
        Some(m) => m.min(last),
        None => last,
    };
    let mut sum: BigInt = (1..=listed_end).map(|i| BigInt::from(f.g(i))).sum();
    if m > BigInt::from(last) {
        sum += &m - BigInt::from(last);
    }
    let next = match m_usize {
        Some(m) => f.g(m + 1),
        None => 1,
    };
    let frac = u - Rat::from_integer(m);
    let total = Rat::from_integer(sum) + frac * int(next as i64);
    Ok(total / int(f.g(0) as i64))
}

/// Inverse of [`herbrand_phi`].
pub fn herbrand_psi(f: &Filtration, v: &Rat) -> Result<Rat> {
    non_negative(v, "v")?;
    let g0 = int(f.g(0) as i64);
    let mut phi_n = Rat::zero();
    let mut n = 0usize;
    loop {
        if n >= f.last() {
            // every later slope is 1/g0
            return Ok(int(n as i64) + (v - &phi_n) * &g0);
        }
        let next = int(f.g(n + 1) as i64);
        let step = &next / &g0;
        if *v <= &phi_n + &step {
            return Ok(int(n as i64) + (v - &phi_n) * &g0 / next);
        }
        phi_n += step;
        n += 1;
    }
}

/// Upper-numbering jumps as `(upper number, order of the group starting there)`.
///
/// Lists the full inertia group at upper number 0 whenever the extension is
/// ramified, followed by `(φ(n), g_n)` for every lower break `n ≥ 1`.
pub fn upper_breaks(f: &Filtration) -> Vec<(Rat, u64)> {
    let mut out = Vec::new();
    if f.g(0) > 1 {
        out.push((Rat::zero(), f.g(0)));
    }
    for n in 1..=f.last() {
        if f.g(n) > f.g(n + 1) {
            let phi = herbrand_phi(f, &int(n as i64)).expect("n >= 0");
            out.push((phi, f.g(n)));
        }
    }
    out
}

/// Valuation of the different in the top field: `Σ_{i ≥ 0} (g_i − 1)`.
pub fn different_valuation(f: &Filtration) -> u64 {
    f.orders.iter().map(|g| g - 1).sum()
}

/// Contribution of one prime to the exponent of the root discriminant:
/// `different_valuation / g₀`.
pub fn root_disc_exponent(f: &Filtration) -> Rat {
    int(different_valuation(f) as i64) / int(f.g(0) as i64)
}

fn check_prime(p: u64) -> Result<()> {
    if is_prime(p) {
        Ok(())
    } else {
        Err(RamificationError::Domain(format!("{p} is not prime")))
    }
}

/// Upper-numbering vanishing threshold `e_K(n + 1/(p−1)) − 1` for a
/// `pⁿ`-torsion finite flat group scheme.
pub fn fontaine_upper_bound(e_k: u64, n: u64, p: u64) -> Result<Rat> {
    check_prime(p)?;
    if e_k < 1 || n < 1 {
        return Err(RamificationError::Domain(format!("need e_K >= 1 and n >= 1, got ({e_k}, {n})")));
    }
    Ok(int(e_k as i64) * fontaine_different_bound(n, p)? - Rat::one())
}

/// Strict upper bound `n + 1/(p−1)` on `v_p` of the different of the `pⁿ`-division field.
pub fn fontaine_different_bound(n: u64, p: u64) -> Result<Rat> {
    check_prime(p)?;
    if n < 1 {
        return Err(RamificationError::Domain("n must be at least 1".into()));
    }
    Ok(int(n as i64) + Rat::new(BigInt::one(), BigInt::from(p - 1)))
}

/// `v_p` of the different of `K(μ_{p^m})/K` over an unramified `K`: `m − 1/(p−1)`.
pub fn cyclotomic_different(p: u64, m: u64) -> Result<Rat> {
    check_prime(p)?;
    let trivial = m == 0 || (p == 2 && m == 1);
    if trivial {
        return Err(RamificationError::Domain(format!("{p}^{m} <= 2 gives a trivial cyclotomic layer")));
    }
    Ok(int(m as i64) - Rat::new(BigInt::one(), BigInt::from(p - 1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CyclotomicCap {
    /// Largest `m` with `F_m` possibly inside the `pⁿ`-division field.
    pub cap: u64,
    /// Whether the `p = 2` refinement (`L₂ ∩ F_∞ = F₂`) was applied.
    pub refined: bool,
}

/// Largest `m` for which the cyclotomic different does not reach the strict different bound.
pub fn cyclotomic_cap(p: u64, n: u64) -> Result<u64> {
    Ok(cyclotomic_cap_refined(p, n, false)?.cap)
}

/// [`cyclotomic_cap`] with the optional `p = 2` refinement: when the
/// 4-division field meets the cyclotomic tower exactly in `F₂`, the cap
/// drops to `n` for every `n ≥ 2`.
pub fn cyclotomic_cap_refined(p: u64, n: u64, l2_minimal: bool) -> Result<CyclotomicCap> {
    let bound = fontaine_different_bound(n, p)?;
    let mut cap = 0;
    let mut m = 1;
    loop {
        let admissible = match cyclotomic_different(p, m) {
            Ok(d) => d < bound,
            // trivial layers are always contained
            Err(_) => true,
        };
        if !admissible {
            break;
        }
        cap = m;
        m += 1;
    }
    if p == 2 && l2_minimal && n >= 2 {
        return Ok(CyclotomicCap { cap: n, refined: true });
    }
    Ok(CyclotomicCap { cap, refined: false })
}

/// `φ(c) + 1` where `c` is the largest lower index with `g_c > 1`; zero when unramified.
/// Defined for every filtration; integral exactly when Hasse–Arf holds.
pub fn conductor_bound(f: &Filtration) -> Rat {
    if f.is_unramified() {
        return Rat::zero();
    }
    let c = (0..=f.last()).rev().find(|&n| f.g(n) > 1).expect("g0 > 1");
    herbrand_phi(f, &int(c as i64)).expect("c >= 0") + Rat::one()
}

/// Conductor exponent of an abelian extension with this filtration.
pub fn conductor_exponent(f: &Filtration) -> Result<u64> {
    let c = conductor_bound(f);
    if !c.is_integer() {
        return Err(RamificationError::NonIntegralConductor(fmt_rat(&c)));
    }
    Ok(c.to_integer().to_u64().expect("small conductor"))
}

/// Checks `φ` is continuous, piecewise linear with slopes `g_{m+1}/g₀` and concave
/// on `[0, upto]`, by sampling integer and midpoint values.
pub fn phi_is_concave(f: &Filtration, upto: usize) -> bool {
    let g0 = int(f.g(0) as i64);
    let mut prev_slope: Option<Rat> = None;
    for m in 0..upto {
        let a = herbrand_phi(f, &int(m as i64)).unwrap();
        let b = herbrand_phi(f, &int(m as i64 + 1)).unwrap();
        let mid = herbrand_phi(f, &(int(m as i64) + Rat::new(1.into(), 2.into()))).unwrap();
        let slope = &b - &a;
        if slope != int(f.g(m + 1) as i64) / &g0 || (&a + &b) / int(2) != mid {
            return false;
        }
        if let Some(p) = &prev_slope {
            if slope > *p {
                return false;
            }
        }
        prev_slope = Some(slope);
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::rat;
    use proptest::prelude::*;

    fn filt(p: u64, orders: &[u64]) -> Filtration {
        Filtration::relaxed(p, orders.to_vec()).unwrap()
    }

    #[test]
    fn rejects_malformed_filtrations() {
        assert!(Filtration::new(2, vec![]).is_err());
        assert!(Filtration::new(4, vec![1]).is_err());
        assert!(Filtration::new(2, vec![2, 4]).is_err());
        assert!(Filtration::new(2, vec![6, 3, 1]).is_err()); // g1 = 3 not a power of 2
        assert!(Filtration::new(3, vec![3, 1]).is_err()); // tame degree divisible by p
        assert!(Filtration::new(2, vec![8, 4, 3]).is_err());
        assert!(Filtration::new(2, vec![12, 4, 2, 1]).is_ok());
        // (4, 2, 1) has a valid shape but tame degree 2 at p = 2
        assert!(Filtration::new(2, vec![4, 2, 1]).is_err());
        assert!(Filtration::relaxed(2, vec![4, 2, 1]).is_ok());
        assert!(Filtration::relaxed(2, vec![4, 3, 1]).is_err());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(herbrand_phi(&filt(2, &[1]), &int(5)).unwrap(), int(5));
        assert_eq!(herbrand_phi(&filt(2, &[4, 2, 1]), &rat(3, 2)).unwrap(), rat(5, 8));
        assert_eq!(herbrand_phi(&filt(3, &[3, 3, 1]), &int(1)).unwrap(), int(1));
        assert_eq!(herbrand_phi(&filt(2, &[4, 2, 1]), &int(0)).unwrap(), int(0));
        // beyond the listed orders the slope is 1/g0
        assert_eq!(herbrand_phi(&filt(2, &[4, 2, 1]), &int(5)).unwrap(), rat(6, 4));
        assert!(herbrand_phi(&filt(2, &[1]), &rat(-1, 2)).is_err());
    }

    #[test]
    fn psi_examples() {
        assert_eq!(herbrand_psi(&filt(2, &[4, 2, 1]), &rat(5, 8)).unwrap(), rat(3, 2));
        assert_eq!(herbrand_psi(&filt(2, &[1]), &int(7)).unwrap(), int(7));
        assert_eq!(herbrand_psi(&filt(3, &[9, 9, 3, 1]), &int(0)).unwrap(), int(0));
        assert!(herbrand_psi(&filt(2, &[1]), &int(-1)).is_err());
    }

    #[test]
    fn upper_break_examples() {
        assert_eq!(upper_breaks(&filt(2, &[4, 2, 1])), vec![(int(0), 4), (rat(1, 2), 2)]);
        assert!(upper_breaks(&filt(5, &[1])).is_empty());
        assert_eq!(upper_breaks(&filt(3, &[3, 3, 1])), vec![(int(0), 3), (int(1), 3)]);
        assert_eq!(upper_breaks(&filt(2, &[9, 1])), vec![(int(0), 9)]);
    }

    #[test]
    fn different_and_root_discriminant() {
        assert_eq!(different_valuation(&filt(2, &[9, 1])), 8);
        assert_eq!(different_valuation(&filt(2, &[1])), 0);
        assert_eq!(different_valuation(&filt(2, &[4, 2, 1])), 4);
        assert_eq!(root_disc_exponent(&Filtration::tame(2, 3).unwrap()), rat(2, 3));
        assert_eq!(root_disc_exponent(&filt(2, &[1])), int(0));
        assert_eq!(root_disc_exponent(&filt(2, &[4, 2, 1])), int(1));
    }

    #[test]
    fn fontaine_bounds() {
        assert_eq!(fontaine_upper_bound(1, 1, 2).unwrap(), int(1));
        assert_eq!(fontaine_upper_bound(1, 1, 3).unwrap(), rat(1, 2));
        assert_eq!(fontaine_upper_bound(2, 1, 2).unwrap(), int(3));
        assert!(fontaine_upper_bound(0, 1, 2).is_err());
        assert_eq!(fontaine_different_bound(1, 3).unwrap(), rat(3, 2));
        assert_eq!(fontaine_different_bound(2, 2).unwrap(), int(3));
        assert_eq!(fontaine_different_bound(1, 7).unwrap(), rat(7, 6));
    }

    #[test]
    fn cyclotomic_layers() {
        assert_eq!(cyclotomic_different(3, 2).unwrap(), rat(3, 2));
        assert_eq!(cyclotomic_different(2, 3).unwrap(), int(2));
        assert_eq!(cyclotomic_different(5, 1).unwrap(), rat(3, 4));
        assert!(cyclotomic_different(2, 1).is_err());
        assert_eq!(cyclotomic_cap(3, 1).unwrap(), 1);
        assert_eq!(cyclotomic_cap(2, 1).unwrap(), 2);
        assert_eq!(cyclotomic_cap(7, 4).unwrap(), 4);
        let refined = cyclotomic_cap_refined(2, 3, true).unwrap();
        assert_eq!(refined, CyclotomicCap { cap: 3, refined: true });
        assert_eq!(cyclotomic_cap_refined(2, 3, false).unwrap().cap, 4);
    }

    #[test]
    fn conductor_examples() {
        assert_eq!(conductor_exponent(&filt(2, &[2, 2, 1])).unwrap(), 2);
        assert_eq!(conductor_exponent(&filt(2, &[1])).unwrap(), 0);
        assert_eq!(conductor_exponent(&Filtration::tame(2, 5).unwrap()).unwrap(), 1);
        // g0 > g1 > 1 with a break at 1 violates Hasse–Arf
        assert!(matches!(
            conductor_exponent(&filt(2, &[6, 2, 1])),
            Err(RamificationError::NonIntegralConductor(_))
        ));
        assert_eq!(conductor_bound(&filt(2, &[6, 2, 1])), rat(4, 3));
    }

    fn arb_filtration() -> impl Strategy<Value = Filtration> {
        (
            prop::sample::select(vec![2u64, 3, 5, 7]),
            prop::sample::select(vec![1u64, 2, 3, 4, 5, 6, 7, 8]),
            prop::collection::vec(0u32..3, 0..5),
            0u32..3,
        )
            .prop_filter_map("tame part coprime to p", |(p, tame, drops, k)| {
                if tame % p == 0 {
                    return None;
                }
                // wild part p^k, then successive drops by p-powers
                let mut wild = p.pow(k + drops.iter().sum::<u32>());
                let mut orders = vec![tame * wild];
                orders.push(wild);
                for d in drops {
                    wild /= p.pow(d);
                    orders.push(wild);
                }
                Filtration::new(p, orders).ok()
            })
    }

    fn arb_point() -> impl Strategy<Value = Rat> {
        (0i64..400, 1i64..40).prop_map(|(n, d)| rat(n, d))
    }

    proptest! {
        #[test]
        fn phi_psi_inverse(f in arb_filtration(), x in arb_point()) {
            let phi = herbrand_phi(&f, &x).unwrap();
            prop_assert_eq!(herbrand_psi(&f, &phi).unwrap(), x.clone());
            let psi = herbrand_psi(&f, &x).unwrap();
            prop_assert_eq!(herbrand_phi(&f, &psi).unwrap(), x);
        }

        #[test]
        fn phi_concave_and_piecewise_linear(f in arb_filtration()) {
            prop_assert!(phi_is_concave(&f, f.orders().len() + 3));
        }

        #[test]
        fn tame_root_disc_exponent_below_one(p in prop::sample::select(vec![2u64, 3, 5, 7]), e in 1u64..200) {
            prop_assume!(e % p != 0);
            let f = Filtration::tame(p, e).unwrap();
            prop_assert_eq!(root_disc_exponent(&f), Rat::one() - Rat::new(1.into(), (e as i64).into()));
            prop_assert!(root_disc_exponent(&f) < Rat::one());
        }

        #[test]
        fn conductor_at_most_two_when_g2_trivial(f in arb_filtration()) {
            prop_assume!(f.g(2) == 1);
            prop_assert!(conductor_bound(&f) <= int(2));
            if let Ok(c) = conductor_exponent(&f) {
                prop_assert!(c <= 2);
            }
        }

        #[test]
        fn cyclotomic_layers_beyond_cap_are_excluded(p in prop::sample::select(vec![2u64, 3, 5, 7, 11]), n in 1u64..6) {
            let cap = cyclotomic_cap(p, n).unwrap();
            let bound = fontaine_different_bound(n, p).unwrap();
            for m in cap + 1..cap + 4 {
                prop_assert!(cyclotomic_different(p, m).unwrap() >= bound);
            }
        }
    }
}
