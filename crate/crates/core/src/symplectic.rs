//! Symplectic spaces over small finite fields: Lagrangian subspaces,
//! fixed Lagrangians of unipotent groups, and eigenspaces of form-inverting
//! involutions.

use std::collections::{HashSet, VecDeque};

use rand::Rng;
use thiserror::Error;

use crate::exactnum::factor_u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SympError {
    #[error("unsupported field size {0}")]
    FieldSize(u64),
    #[error("invalid form: {0}")]
    Form(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("enumeration of {0} subspaces exceeds the budget")]
    Budget(u128),
}

type Result<T> = std::result::Result<T, SympError>;

pub type Elt = u16;
pub type Matrix = Vec<Vec<Elt>>;

/// Upper limit on enumerated Lagrangians.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;
/// Largest group listed when checking that generators span an `ℓ`-group.
pub const GROUP_CLOSURE_LIMIT: usize = 100_000;

/// `F_q` for a prime power `q ≤ 256`, elements encoded as base-`p` digit
/// strings of polynomial coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gf {
    q: usize,
    p: usize,
    add: Vec<Elt>,
    mul: Vec<Elt>,
    neg: Vec<Elt>,
    inv: Vec<Elt>,
}

fn poly_add(a: usize, b: usize, p: usize) -> usize {
    let (mut a, mut b, mut out, mut place) = (a, b, 0, 1);
    while a > 0 || b > 0 {
        out += ((a % p + b % p) % p) * place;
        a /= p;
        b /= p;
        place *= p;
    }
    out
}

fn digits(mut a: usize, p: usize, k: usize) -> Vec<usize> {
    (0..k)
        .map(|_| {
            let d = a % p;
            a /= p;
            d
        })
        .collect()
}

fn mul_table(p: usize, k: usize, modulus: &[usize]) -> Vec<Elt> {
    let q = p.pow(k as u32);
    let mut table = vec![0; q * q];
    for a in 0..q {
        let da = digits(a, p, k);
        for b in a..q {
            let db = digits(b, p, k);
            let mut prod = vec![0usize; 2 * k];
            for (i, x) in da.iter().enumerate() {
                for (j, y) in db.iter().enumerate() {
                    prod[i + j] = (prod[i + j] + x * y) % p;
                }
            }
            for d in (k..2 * k).rev() {
                let c = prod[d];
                if c != 0 {
                    for (i, m) in modulus.iter().enumerate() {
                        prod[d - k + i] = (prod[d - k + i] + p * p - c * m % p) % p;
                    }
                    prod[d] = 0;
                }
            }
            let v = prod[..k].iter().rev().fold(0, |acc, &c| acc * p + c) as Elt;
            table[a * q + b] = v;
            table[b * q + a] = v;
        }
    }
    table
}

impl Gf {
    pub fn new(q: u64) -> Result<Gf> {
        let f = factor_u64(q);
        if q > 256 || f.len() != 1 {
            return Err(SympError::FieldSize(q));
        }
        let (p, k) = (f[0].0 as usize, f[0].1 as usize);
        let q = q as usize;
        let mut add = vec![0; q * q];
        for a in 0..q {
            for b in 0..q {
                add[a * q + b] = poly_add(a, b, p) as Elt;
            }
        }
        // Monic modulus x^k + m_{k−1}x^{k−1} + … + m_0; the table is a field
        // exactly when every nonzero row contains 1.
        let mul = (0..q)
            .map(|low| {
                let modulus = digits(low, p, k);
                mul_table(p, k, &modulus)
            })
            .find(|t| (1..q).all(|a| t[a * q..(a + 1) * q].contains(&1)))
            .expect("an irreducible polynomial exists in every degree");
        let neg = (0..q).map(|a| (0..q).find(|&b| add[a * q + b] == 0).unwrap() as Elt).collect();
        let inv = (0..q)
            .map(|a| if a == 0 { 0 } else { (1..q).find(|&b| mul[a * q + b] == 1).unwrap() as Elt })
            .collect();
        Ok(Gf { q, p, add, mul, neg, inv })
    }

    pub fn order(&self) -> u64 {
        self.q as u64
    }

    pub fn characteristic(&self) -> u64 {
        self.p as u64
    }

    pub fn add(&self, a: Elt, b: Elt) -> Elt {
        self.add[a as usize * self.q + b as usize]
    }

    pub fn sub(&self, a: Elt, b: Elt) -> Elt {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: Elt, b: Elt) -> Elt {
        self.mul[a as usize * self.q + b as usize]
    }

    pub fn neg(&self, a: Elt) -> Elt {
        self.neg[a as usize]
    }

    pub fn inv(&self, a: Elt) -> Elt {
        assert!(a != 0, "inverse of zero");
        self.inv[a as usize]
    }

    /// Image of an integer under `Z → F_p ⊆ F_q`.
    pub fn from_int(&self, n: i64) -> Elt {
        n.rem_euclid(self.p as i64) as Elt
    }

    pub fn dot(&self, a: &[Elt], b: &[Elt]) -> Elt {
        a.iter().zip(b).fold(0, |acc, (&x, &y)| self.add(acc, self.mul(x, y)))
    }

    pub fn mat_vec(&self, m: &Matrix, v: &[Elt]) -> Vec<Elt> {
        m.iter().map(|row| self.dot(row, v)).collect()
    }

    pub fn mat_mul(&self, a: &Matrix, b: &Matrix) -> Matrix {
        let cols = b.first().map_or(0, Vec::len);
        a.iter()
            .map(|row| (0..cols).map(|j| self.dot(row, &b.iter().map(|r| r[j]).collect::<Vec<_>>())).collect())
            .collect()
    }

    pub fn identity(&self, n: usize) -> Matrix {
        (0..n).map(|i| (0..n).map(|j| Elt::from(i == j)).collect()).collect()
    }

    /// Reduced row echelon form with zero rows removed.
    pub fn rref(&self, rows: &[Vec<Elt>]) -> Matrix {
        let mut m: Matrix = rows.to_vec();
        let cols = m.first().map_or(0, Vec::len);
        let mut r = 0;
        for c in 0..cols {
            let Some(piv) = (r..m.len()).find(|&i| m[i][c] != 0) else { continue };
            m.swap(r, piv);
            let s = self.inv(m[r][c]);
            for x in m[r].iter_mut() {
                *x = self.mul(*x, s);
            }
            for i in 0..m.len() {
                if i != r && m[i][c] != 0 {
                    let f = m[i][c];
                    for j in 0..cols {
                        m[i][j] = self.sub(m[i][j], self.mul(f, m[r][j]));
                    }
                }
            }
            r += 1;
        }
        m.truncate(r);
        m
    }

    /// Basis (in reduced echelon form) of `{x : Mx = 0}` for an `r × cols` matrix.
    pub fn kernel(&self, m: &Matrix, cols: usize) -> Matrix {
        let e = self.rref(m);
        let pivots: Vec<usize> =
            e.iter().map(|row| row.iter().position(|&x| x != 0).unwrap()).collect();
        let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
        let basis: Matrix = free
            .iter()
            .map(|&f| {
                let mut v = vec![0; cols];
                v[f] = 1;
                for (row, &pc) in e.iter().zip(&pivots) {
                    v[pc] = self.neg(row[f]);
                }
                v
            })
            .collect();
        self.rref(&basis)
    }

    fn transpose(m: &Matrix) -> Matrix {
        let cols = m.first().map_or(0, Vec::len);
        (0..cols).map(|j| m.iter().map(|r| r[j]).collect()).collect()
    }
}

/// Subspace stored as its reduced row echelon basis, so equal subspaces have
/// equal representations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subspace {
    ambient: usize,
    rows: Matrix,
}

impl Subspace {
    pub fn span(field: &Gf, ambient: usize, vectors: &[Vec<Elt>]) -> Subspace {
        Subspace { ambient, rows: field.rref(vectors) }
    }

    pub fn zero(ambient: usize) -> Subspace {
        Subspace { ambient, rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn basis(&self) -> &Matrix {
        &self.rows
    }

    /// Canonical representative of `v` modulo this subspace.
    pub fn reduce(&self, field: &Gf, v: &[Elt]) -> Vec<Elt> {
        let mut v = v.to_vec();
        for row in &self.rows {
            let pc = row.iter().position(|&x| x != 0).unwrap();
            let f = v[pc];
            if f != 0 {
                for (x, &r) in v.iter_mut().zip(row) {
                    *x = field.sub(*x, field.mul(f, r));
                }
            }
        }
        v
    }

    pub fn contains(&self, field: &Gf, v: &[Elt]) -> bool {
        self.reduce(field, v).iter().all(|&x| x == 0)
    }

    pub fn contains_subspace(&self, field: &Gf, other: &Subspace) -> bool {
        other.rows.iter().all(|v| self.contains(field, v))
    }

    pub fn sum(&self, field: &Gf, other: &Subspace) -> Subspace {
        let mut all = self.rows.clone();
        all.extend(other.rows.iter().cloned());
        Subspace::span(field, self.ambient, &all)
    }

    pub fn intersect(&self, field: &Gf, other: &Subspace) -> Subspace {
        // Solve Σ aᵢuᵢ = Σ bⱼwⱼ.
        let (a, b) = (self.dim(), other.dim());
        if a == 0 || b == 0 {
            return Subspace::zero(self.ambient);
        }
        let system: Matrix = (0..self.ambient)
            .map(|k| {
                self.rows
                    .iter()
                    .map(|u| u[k])
                    .chain(other.rows.iter().map(|w| field.neg(w[k])))
                    .collect()
            })
            .collect();
        let sols = field.kernel(&system, a + b);
        let vecs: Matrix = sols
            .iter()
            .map(|s| {
                (0..self.ambient)
                    .map(|k| (0..a).fold(0, |acc, i| field.add(acc, field.mul(s[i], self.rows[i][k]))))
                    .collect()
            })
            .collect();
        Subspace::span(field, self.ambient, &vecs)
    }

    pub fn image(&self, field: &Gf, m: &Matrix) -> Subspace {
        let vecs: Matrix = self.rows.iter().map(|v| field.mat_vec(m, v)).collect();
        Subspace::span(field, self.ambient, &vecs)
    }
}

/// `F_q^{2n}` with a nondegenerate alternating form `(v, w) ↦ vᵀJw`.
#[derive(Clone, Debug)]
pub struct SympSpace {
    field: Gf,
    form: Matrix,
}

impl SympSpace {
    pub fn new(field: Gf, form: Matrix) -> Result<SympSpace> {
        let d = form.len();
        if d == 0 || d % 2 == 1 || form.iter().any(|r| r.len() != d) {
            return Err(SympError::Form("form must be a square matrix of even size".into()));
        }
        for i in 0..d {
            if form[i][i] != 0 {
                return Err(SympError::Form("diagonal entries must vanish".into()));
            }
            for j in 0..i {
                if form[i][j] != field.neg(form[j][i]) {
                    return Err(SympError::Form("form is not skew-symmetric".into()));
                }
            }
        }
        if field.rref(&form).len() != d {
            return Err(SympError::Form("form is degenerate".into()));
        }
        Ok(SympSpace { field, form })
    }

    /// `J = [[0, I], [−I, 0]]` on `F_q^{2n}`.
    pub fn standard(q: u64, n: usize) -> Result<SympSpace> {
        let field = Gf::new(q)?;
        let one = 1;
        let m1 = field.neg(1);
        let form = (0..2 * n)
            .map(|i| {
                (0..2 * n)
                    .map(|j| match () {
                        _ if i < n && j == i + n => one,
                        _ if i >= n && j + n == i => m1,
                        _ => 0,
                    })
                    .collect()
            })
            .collect();
        SympSpace::new(field, form)
    }

    pub fn field(&self) -> &Gf {
        &self.field
    }

    pub fn form(&self) -> &Matrix {
        &self.form
    }

    pub fn dim(&self) -> usize {
        self.form.len()
    }

    pub fn half_dim(&self) -> usize {
        self.form.len() / 2
    }

    pub fn pair(&self, v: &[Elt], w: &[Elt]) -> Elt {
        self.field.dot(v, &self.field.mat_vec(&self.form, w))
    }

    pub fn is_isotropic(&self, w: &Subspace) -> bool {
        let b = w.basis();
        (0..b.len()).all(|i| (i + 1..b.len()).all(|j| self.pair(&b[i], &b[j]) == 0))
    }

    pub fn is_lagrangian(&self, w: &Subspace) -> bool {
        w.dim() == self.half_dim() && self.is_isotropic(w)
    }

    pub fn perp(&self, w: &Subspace) -> Subspace {
        let rows: Matrix = w.basis().iter().map(|v| self.field.mat_vec(&Gf::transpose(&self.form), v)).collect();
        let k = self.field.kernel(&rows, self.dim());
        Subspace { ambient: self.dim(), rows: k }
    }

    pub fn preserves_form(&self, g: &Matrix) -> bool {
        let gt = Gf::transpose(g);
        self.field.mat_mul(&self.field.mat_mul(&gt, &self.form), g) == self.form
    }

    pub fn inverts_form(&self, g: &Matrix) -> bool {
        let gt = Gf::transpose(g);
        let neg: Matrix =
            self.form.iter().map(|r| r.iter().map(|&x| self.field.neg(x)).collect()).collect();
        self.field.mat_mul(&self.field.mat_mul(&gt, &self.form), g) == neg
    }

    /// Every Lagrangian subspace, in canonical order.
    pub fn enumerate_lagrangians(&self) -> Result<Vec<Subspace>> {
        let n = self.half_dim();
        let expected = lagrangian_count_formula(self.field.order(), n as u32);
        if expected > ENUMERATION_BUDGET {
            return Err(SympError::Budget(expected));
        }
        let d = self.dim();
        let mut out = Vec::new();
        for pivots in combinations(d, n) {
            let mut rows: Matrix = Vec::with_capacity(n);
            self.fill_rows(&pivots, &mut rows, &mut out);
        }
        out.sort();
        Ok(out)
    }

    fn fill_rows(&self, pivots: &[usize], rows: &mut Matrix, out: &mut Vec<Subspace>) {
        let i = rows.len();
        if i == pivots.len() {
            out.push(Subspace { ambient: self.dim(), rows: rows.clone() });
            return;
        }
        let free: Vec<usize> =
            (pivots[i] + 1..self.dim()).filter(|c| !pivots.contains(c)).collect();
        let q = self.field.q;
        let total = q.pow(free.len() as u32);
        for code in 0..total {
            let mut v = vec![0; self.dim()];
            v[pivots[i]] = 1;
            let mut c = code;
            for &f in &free {
                v[f] = (c % q) as Elt;
                c /= q;
            }
            if rows.iter().all(|r| self.pair(r, &v) == 0) {
                rows.push(v);
                self.fill_rows(pivots, rows, out);
                rows.pop();
            }
        }
    }

    fn check_ell_group(&self, gens: &[Matrix]) -> Result<()> {
        let ell = self.field.characteristic();
        for g in gens {
            if g.len() != self.dim() || g.iter().any(|r| r.len() != self.dim()) {
                return Err(SympError::Precondition("generator has the wrong size".into()));
            }
            if !self.preserves_form(g) {
                return Err(SympError::Precondition("generator does not preserve the form".into()));
            }
        }
        let order = matrix_group_order(&self.field, self.dim(), gens)?;
        if factor_u64(order).iter().any(|&(p, _)| p != ell) {
            return Err(SympError::Precondition(format!(
                "generated group has order {order}, not a power of {ell}"
            )));
        }
        Ok(())
    }

    /// A Lagrangian fixed by the `ℓ`-group generated by `gens`, where `ℓ` is
    /// the characteristic. Uses the orbit decomposition of all Lagrangians
    /// when it fits the budget, else [`Self::stable_lagrangian_by_refinement`].
    pub fn stable_lagrangian(&self, gens: &[Matrix]) -> Result<Subspace> {
        self.check_ell_group(gens)?;
        let w = match self.fixed_lagrangians_unchecked(gens) {
            Ok(fixed) => fixed.into_iter().next().expect("ℓ-groups fix a Lagrangian"),
            Err(SympError::Budget(_)) => self.refine_unchecked(gens),
            Err(e) => return Err(e),
        };
        if !self.is_lagrangian(&w) || gens.iter().any(|g| w.image(&self.field, g) != w) {
            return Err(SympError::Precondition("computed subspace is not a stable Lagrangian".into()));
        }
        Ok(w)
    }

    /// All Lagrangians fixed by every generator, found as the singleton orbits.
    pub fn fixed_lagrangians(&self, gens: &[Matrix]) -> Result<Vec<Subspace>> {
        self.check_ell_group(gens)?;
        self.fixed_lagrangians_unchecked(gens)
    }

    fn fixed_lagrangians_unchecked(&self, gens: &[Matrix]) -> Result<Vec<Subspace>> {
        let all = self.enumerate_lagrangians()?;
        let mut seen: HashSet<Subspace> = HashSet::new();
        let mut fixed = Vec::new();
        for w in &all {
            if seen.contains(w) {
                continue;
            }
            let mut orbit = vec![w.clone()];
            seen.insert(w.clone());
            let mut queue = VecDeque::from([w.clone()]);
            while let Some(x) = queue.pop_front() {
                for g in gens {
                    let y = x.image(&self.field, g);
                    if seen.insert(y.clone()) {
                        orbit.push(y.clone());
                        queue.push_back(y);
                    }
                }
            }
            if orbit.len() == 1 {
                fixed.push(w.clone());
            }
        }
        Ok(fixed)
    }

    /// Grows an invariant isotropic subspace `U` one vector at a time, adding
    /// a vector of `U^⊥` whose class in `U^⊥/U` is fixed by every generator.
    pub fn stable_lagrangian_by_refinement(&self, gens: &[Matrix]) -> Result<Subspace> {
        self.check_ell_group(gens)?;
        Ok(self.refine_unchecked(gens))
    }

    fn refine_unchecked(&self, gens: &[Matrix]) -> Subspace {
        let f = &self.field;
        let d = self.dim();
        let mut u = Subspace::zero(d);
        while u.dim() < self.half_dim() {
            let up = self.perp(&u);
            // Complement of U inside U^⊥: basis vectors of U^⊥ not already in U.
            let mut comp: Matrix = Vec::new();
            let mut acc = u.clone();
            for v in up.basis() {
                if !acc.contains(f, v) {
                    acc = acc.sum(f, &Subspace::span(f, d, std::slice::from_ref(v)));
                    comp.push(v.clone());
                }
            }
            // Columns: (g − 1)bⱼ mod U, stacked over all generators.
            let mut system: Matrix = Vec::new();
            for g in gens {
                let cols: Matrix = comp
                    .iter()
                    .map(|b| {
                        let gb = f.mat_vec(g, b);
                        let diff: Vec<Elt> = gb.iter().zip(b).map(|(&x, &y)| f.sub(x, y)).collect();
                        u.reduce(f, &diff)
                    })
                    .collect();
                system.extend(Gf::transpose(&cols));
            }
            let sols = f.kernel(&system, comp.len());
            let c = &sols[0];
            let v: Vec<Elt> = (0..d)
                .map(|k| (0..comp.len()).fold(0, |acc, j| f.add(acc, f.mul(c[j], comp[j][k]))))
                .collect();
            u = u.sum(f, &Subspace::span(f, d, &[v]));
        }
        u
    }

    /// The `+1` and `−1` eigenspaces of an involution `τ` with `τᵀJτ = −J`
    /// in odd characteristic; both are Lagrangian.
    pub fn involution_eigen_lagrangians(&self, tau: &Matrix) -> Result<(Subspace, Subspace)> {
        let f = &self.field;
        if f.characteristic() == 2 {
            return Err(SympError::Precondition("characteristic 2".into()));
        }
        let d = self.dim();
        if tau.len() != d || tau.iter().any(|r| r.len() != d) {
            return Err(SympError::Precondition("tau has the wrong size".into()));
        }
        if f.mat_mul(tau, tau) != f.identity(d) {
            return Err(SympError::Precondition("tau is not an involution".into()));
        }
        if !self.inverts_form(tau) {
            return Err(SympError::Precondition("tau does not invert the form".into()));
        }
        let shifted = |eps: Elt| -> Matrix {
            (0..d)
                .map(|i| (0..d).map(|j| if i == j { f.sub(tau[i][j], eps) } else { tau[i][j] }).collect())
                .collect()
        };
        let plus = Subspace { ambient: d, rows: f.kernel(&shifted(1), d) };
        let minus = Subspace { ambient: d, rows: f.kernel(&shifted(f.neg(1)), d) };
        for w in [&plus, &minus] {
            if !self.is_lagrangian(w) {
                return Err(SympError::Precondition("eigenspace is not Lagrangian".into()));
            }
        }
        Ok((plus, minus))
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Order of the matrix group generated by `gens`, by closure.
pub fn matrix_group_order(field: &Gf, dim: usize, gens: &[Matrix]) -> Result<u64> {
    let id = field.identity(dim);
    let mut seen: HashSet<Matrix> = HashSet::from([id.clone()]);
    let mut queue = VecDeque::from([id]);
    while let Some(x) = queue.pop_front() {
        for g in gens {
            let y = field.mat_mul(g, &x);
            if seen.insert(y.clone()) {
                if seen.len() > GROUP_CLOSURE_LIMIT {
                    return Err(SympError::Budget(GROUP_CLOSURE_LIMIT as u128));
                }
                queue.push_back(y);
            }
        }
    }
    Ok(seen.len() as u64)
}

/// `∏_{i=1}^{n} (1 + q^i)`.
pub fn lagrangian_count_formula(q: u64, n: u32) -> u128 {
    (1..=n).map(|i| 1 + (q as u128).pow(i)).product()
}

/// Random element of the unipotent radical `{[[A, AS], [0, A^{−T}]]}` of the
/// standard Borel subgroup (A unitriangular, S symmetric).
fn random_unipotent<R: Rng>(f: &Gf, n: usize, rng: &mut R) -> Matrix {
    let q = f.order() as Elt;
    let mut a = f.identity(n);
    for (i, row) in a.iter_mut().enumerate() {
        for x in row.iter_mut().skip(i + 1) {
            *x = rng.gen_range(0..q);
        }
    }
    let mut s = vec![vec![0; n]; n];
    for i in 0..n {
        for j in i..n {
            let x = rng.gen_range(0..q);
            s[i][j] = x;
            s[j][i] = x;
        }
    }
    let b = f.mat_mul(&a, &s);
    let a_inv_t = Gf::transpose(&invert(f, &a).expect("unitriangular"));
    let mut g = vec![vec![0; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = a[i][j];
            g[i][n + j] = b[i][j];
            g[n + i][n + j] = a_inv_t[i][j];
        }
    }
    g
}

/// Symplectic transvection `x ↦ x + c·(v, x)·v`.
fn transvection(space: &SympSpace, v: &[Elt], c: Elt) -> Matrix {
    let f = &space.field;
    let d = space.dim();
    // Row k of the linear functional x ↦ (v, x) is vᵀJ.
    let vj: Vec<Elt> =
        (0..d).map(|k| (0..d).fold(0, |acc, i| f.add(acc, f.mul(v[i], space.form[i][k])))).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let base = Elt::from(i == k);
                    f.add(base, f.mul(c, f.mul(v[i], vj[k])))
                })
                .collect()
        })
        .collect()
}

pub fn invert(f: &Gf, m: &Matrix) -> Option<Matrix> {
    let n = m.len();
    let aug: Matrix = m
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().copied().chain((0..n).map(|j| Elt::from(i == j))).collect())
        .collect();
    let e = f.rref(&aug);
    if e.len() < n || (0..n).any(|i| e[i][i] != 1) {
        return None;
    }
    Some(e.iter().map(|r| r[n..].to_vec()).collect())
}

/// Generators of a random `ℓ`-subgroup of `Sp(2n, q)` for the standard form:
/// one to three random elements of the unipotent radical of the standard
/// Borel, conjugated by a random product of transvections.
pub fn random_ell_subgroup<R: Rng>(space: &SympSpace, rng: &mut R) -> Vec<Matrix> {
    let f = &space.field;
    let n = space.half_dim();
    let d = space.dim();
    let q = f.order() as Elt;
    let mut conj = f.identity(d);
    for _ in 0..rng.gen_range(1..=2 * d) {
        let v: Vec<Elt> = (0..d).map(|_| rng.gen_range(0..q)).collect();
        let c = rng.gen_range(1..q);
        conj = f.mat_mul(&transvection(space, &v, c), &conj);
    }
    let conj_inv = invert(f, &conj).expect("transvections are invertible");
    (0..rng.gen_range(1..=3))
        .map(|_| f.mat_mul(&f.mat_mul(&conj, &random_unipotent(f, n, rng)), &conj_inv))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_axioms_small() {
        for q in [2u64, 3, 4, 5, 8, 9, 25] {
            let f = Gf::new(q).unwrap();
            for a in 0..q as Elt {
                assert_eq!(f.add(a, f.neg(a)), 0);
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a)), 1);
                }
                for b in 0..q as Elt {
                    for c in 0..q as Elt {
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                        assert_eq!(f.mul(a, f.mul(b, c)), f.mul(f.mul(a, b), c));
                    }
                }
            }
        }
        assert!(Gf::new(6).is_err());
        assert!(Gf::new(512).is_err());
    }

    #[test]
    fn count_formula() {
        assert_eq!(lagrangian_count_formula(2, 1), 3);
        assert_eq!(lagrangian_count_formula(2, 2), 15);
        assert_eq!(lagrangian_count_formula(3, 2), 40);
        for (q, ell) in [(2, 2), (3, 3), (4, 2), (5, 5), (9, 3)] {
            for n in 1..5 {
                assert_eq!(lagrangian_count_formula(q, n) % ell, 1);
            }
        }
    }

    #[test]
    fn enumeration_examples() {
        let v = SympSpace::standard(2, 1).unwrap();
        let ls = v.enumerate_lagrangians().unwrap();
        let f = v.field();
        let expected: Vec<Subspace> = [[0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|r| Subspace::span(f, 2, &[r.to_vec()]))
            .collect();
        assert_eq!(ls, expected);
        assert_eq!(SympSpace::standard(2, 2).unwrap().enumerate_lagrangians().unwrap().len(), 15);
        assert_eq!(SympSpace::standard(3, 1).unwrap().enumerate_lagrangians().unwrap().len(), 4);
        assert_eq!(SympSpace::standard(4, 1).unwrap().enumerate_lagrangians().unwrap().len(), 5);
        assert!(matches!(
            SympSpace::standard(7, 4).unwrap().enumerate_lagrangians(),
            Err(SympError::Budget(_))
        ));
    }

    #[test]
    fn stable_examples() {
        for q in [2, 3] {
            let v = SympSpace::standard(q, 1).unwrap();
            let h = vec![vec![1, 1], vec![0, 1]];
            let w = v.stable_lagrangian(std::slice::from_ref(&h)).unwrap();
            assert_eq!(w, Subspace::span(v.field(), 2, &[vec![1, 0]]));
            assert_eq!(v.stable_lagrangian_by_refinement(&[h]).unwrap(), w);
            let first = v.enumerate_lagrangians().unwrap().remove(0);
            assert_eq!(v.stable_lagrangian(&[]).unwrap(), first);
        }
        let v = SympSpace::standard(3, 1).unwrap();
        let not_ell = vec![vec![0, 1], vec![2, 0]];
        assert!(v.stable_lagrangian(&[not_ell]).is_err());
        let not_symp = vec![vec![1, 0], vec![0, 2]];
        assert!(v.stable_lagrangian(&[not_symp]).is_err());
    }

    #[test]
    fn involution_examples() {
        let v = SympSpace::standard(3, 1).unwrap();
        let f = v.field();
        let tau = vec![vec![1, 0], vec![0, 2]];
        let (plus, minus) = v.involution_eigen_lagrangians(&tau).unwrap();
        assert_eq!(plus, Subspace::span(f, 2, &[vec![1, 0]]));
        assert_eq!(minus, Subspace::span(f, 2, &[vec![0, 1]]));
        let tau2 = vec![vec![2, 0], vec![0, 1]];
        let (p2, m2) = v.involution_eigen_lagrangians(&tau2).unwrap();
        assert_eq!((p2, m2), (minus, plus));
        assert!(v.involution_eigen_lagrangians(&f.identity(2)).is_err());
        let v2 = SympSpace::standard(2, 1).unwrap();
        assert!(v2.involution_eigen_lagrangians(&v2.field().identity(2)).is_err());
    }

    #[test]
    fn orbit_and_refinement_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for q in [2, 3] {
            let v = SympSpace::standard(q, 2).unwrap();
            for _ in 0..20 {
                let gens = random_ell_subgroup(&v, &mut rng);
                let fixed = v.fixed_lagrangians(&gens).unwrap();
                let refined = v.stable_lagrangian_by_refinement(&gens).unwrap();
                assert!(fixed.contains(&refined));
                assert_eq!(fixed.len() as u64 % q, 1);
                if fixed.len() == 1 {
                    assert_eq!(v.stable_lagrangian(&gens).unwrap(), refined);
                }
            }
        }
    }

    #[test]
    fn subspace_operations() {
        let v = SympSpace::standard(3, 2).unwrap();
        let f = v.field();
        let a = Subspace::span(f, 4, &[vec![1, 0, 0, 0], vec![0, 1, 0, 0]]);
        let b = Subspace::span(f, 4, &[vec![1, 1, 0, 0], vec![0, 0, 1, 0]]);
        assert_eq!(a.intersect(f, &b), Subspace::span(f, 4, &[vec![1, 1, 0, 0]]));
        assert_eq!(a.sum(f, &b).dim(), 3);
        assert_eq!(v.perp(&a), a);
        assert!(v.is_lagrangian(&a));
    }
}
