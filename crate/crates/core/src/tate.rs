//! Lattice models of semistable ℓ-adic Tate modules: a lattice `T` in
//! `Q^{2d}` with the fixed alternating form
//! `J = [[0, 0, 1_t], [0, J_a, 0], [−1_t, 0, 0]]`, the unipotent inertia
//! generator `σ = [[1_t, 0, N], [0, 1_{2a}, 0], [0, 0, 1_t]]`, and the
//! isogenies `T ⊂ T′ = T + ℓ^{−1}κ̃` attached to σ-stable kernels
//! `κ ⊆ T/ℓT`.
//!
//! Lattices are kept in upper-triangular column Hermite form. The first
//! `t` basis vectors then span `M₂ = T ∩ W₂` and the first `t + 2a` span
//! `M₁ = T ∩ W₁`, so the Hermite basis is adapted to the filtration and
//! `σ − 1` reads off as a `t × t` integer block from `T/M₁` to `M₂`.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exactnum::{is_prime, valuation_int, Rat};
use crate::symplectic::{Elt, Gf, Matrix, SympError, SympSpace, Subspace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TateError {
    #[error("invalid module: {0}")]
    Invalid(String),
    #[error("kernel is not stable under inertia")]
    Unstable,
    #[error("kernel is all of T/ℓT")]
    NotProper,
    #[error("kernel strategy failed: {0}")]
    Strategy(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Symplectic(#[from] SympError),
}

type Result<T> = std::result::Result<T, TateError>;

type IntMatrix = Vec<Vec<BigInt>>;

/// Assumption recorded on every tower run: the simulator works at a single
/// prime, so stability of each kernel under the global Galois group is taken
/// as given.
pub const GLOBAL_STABILITY_ASSUMPTION: &str =
    "kernels assumed stable under the global Galois group (one prime above p in the l-division field)";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InertiaModule {
    ell: u64,
    t: usize,
    a: usize,
    /// `T = ℓ^{−denom_exp} · span(columns of basis)`.
    denom_exp: u32,
    basis: IntMatrix,
    monodromy: IntMatrix,
    n_lat: IntMatrix,
    form_scale: u32,
}

fn big(n: i64) -> BigInt {
    BigInt::from(n)
}

fn ell_pow(ell: u64, k: u32) -> BigInt {
    num_traits::pow(BigInt::from(ell), k as usize)
}

/// Upper-triangular column Hermite form of the lattice spanned by `cols`
/// (vectors of length `n`): positive diagonal, entries above the diagonal
/// reduced into `[0, diagonal)`. `None` when the span has rank below `n`.
fn hermite(n: usize, cols: Vec<Vec<BigInt>>) -> Option<Vec<Vec<BigInt>>> {
    let mut pool = cols;
    let mut fixed: Vec<Option<Vec<BigInt>>> = vec![None; n];
    for r in (0..n).rev() {
        let idx: Vec<usize> = (0..pool.len()).filter(|&i| !pool[i][r].is_zero()).collect();
        let (&first, rest) = idx.split_first()?;
        let mut piv = pool[first].clone();
        for &c in rest {
            let col = pool[c].clone();
            let (a, b) = (piv[r].clone(), col[r].clone());
            let e = a.extended_gcd(&b);
            let (ag, bg) = (&a / &e.gcd, &b / &e.gcd);
            let new_piv: Vec<BigInt> = piv.iter().zip(&col).map(|(p, q)| &e.x * p + &e.y * q).collect();
            let new_col: Vec<BigInt> = piv.iter().zip(&col).map(|(p, q)| &bg * p - &ag * q).collect();
            piv = new_piv;
            pool[c] = new_col;
        }
        if piv[r].is_negative() {
            piv.iter_mut().for_each(|x| *x = -&*x);
        }
        pool.remove(first);
        fixed[r] = Some(piv);
    }
    if pool.iter().any(|c| c.iter().any(|x| !x.is_zero())) {
        return None;
    }
    let mut out: Vec<Vec<BigInt>> = fixed.into_iter().map(Option::unwrap).collect();
    for j in 0..n {
        for r in (0..j).rev() {
            let q = out[j][r].div_floor(&out[r][r]);
            if !q.is_zero() {
                let pr = out[r].clone();
                for (x, y) in out[j].iter_mut().zip(&pr) {
                    *x -= &q * y;
                }
            }
        }
    }
    Some(out)
}

fn transpose<T: Clone>(m: &[Vec<T>]) -> Vec<Vec<T>> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|j| m.iter().map(|r| r[j].clone()).collect()).collect()
}

fn det_rat(m: &[Vec<Rat>]) -> Rat {
    let n = m.len();
    let mut a: Vec<Vec<Rat>> = m.to_vec();
    let mut det = Rat::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !a[i][c].is_zero()) else { return Rat::zero() };
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c].clone();
        for i in c + 1..n {
            let f = &a[i][c] / &a[c][c];
            for j in c..n {
                let v = &f * &a[c][j];
                a[i][j] -= v;
            }
        }
    }
    det
}

fn det_int(m: &IntMatrix) -> BigInt {
    let q: Vec<Vec<Rat>> = m.iter().map(|r| r.iter().map(|x| Rat::from(x.clone())).collect()).collect();
    det_rat(&q).to_integer()
}

fn mat_mul_int(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols).map(|j| row.iter().zip(b).map(|(x, r)| x * &r[j]).sum()).collect()
        })
        .collect()
}

fn val_or_inf(x: &BigInt, ell: u64) -> Option<u64> {
    valuation_int(x, ell).ok()
}

fn rat_valuation(x: &Rat, ell: u64) -> Option<i64> {
    crate::exactnum::valuation(x, ell).ok()
}

fn lift(x: Elt) -> BigInt {
    BigInt::from(x)
}

fn reduce_mod(x: &BigInt, ell: u64) -> Elt {
    x.mod_floor(&BigInt::from(ell)).to_u16().expect("residue fits")
}

/// A σ-stable subspace of `T/ℓT`, in coordinates of the Hermite basis of `T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Kernel {
    space: Subspace,
}

impl Kernel {
    pub fn from_vectors(m: &InertiaModule, vectors: &[Vec<Elt>]) -> Kernel {
        Kernel { space: Subspace::span(&m.field(), m.rank(), vectors) }
    }

    pub fn subspace(&self) -> &Subspace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn basis(&self) -> &Matrix {
        self.space.basis()
    }
}

#[derive(Clone, Debug)]
pub struct Isogeny {
    pub target: InertiaModule,
    /// Set when the kernel is zero and the target equals the source.
    pub trivial: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentIdentityRecord {
    pub comp_source: u64,
    pub comp_target: u64,
    pub dim_kernel: usize,
    pub dim_kernel_m1: usize,
    pub dim_kernel_m2: usize,
    /// `ord Φ′ + dim κ/(κ ∩ M̄₁)`.
    pub lhs: u64,
    /// `ord Φ + dim κ ∩ M̄₂`.
    pub rhs: u64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagramReport {
    /// `φ_*: T/M₁ → T′/M₁′` in the Hermite bases.
    pub phi: IntMatrix,
    /// `φ′_*: M₂′ → M₂`, induced by multiplication by ℓ.
    pub phi_dual: IntMatrix,
    pub identity_holds: bool,
    pub injective: bool,
    pub cokernels_match: bool,
}

impl DiagramReport {
    pub fn holds(&self) -> bool {
        self.identity_holds && self.injective && self.cokernels_match
    }
}

#[derive(Clone, Debug)]
pub enum KernelStrategy {
    FlagM2,
    FlagM1,
    /// `+1`-eigenspace of an involution on `M̄₁/M̄₂` (middle Hermite
    /// coordinates) that inverts the induced form; `ℓ` odd.
    LagrangianTau(Matrix),
    /// Lagrangian of `M̄₁/M̄₂` fixed by the 2-group generated by the given
    /// matrices (middle Hermite coordinates); `ℓ = 2`.
    Lagrangian2Group(Vec<Matrix>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelBias {
    Any,
    ContainsM2,
    BetweenFlags,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TowerRun {
    /// `(effective stage, ord_ℓ of the component group)` before the first
    /// step and after each step.
    pub steps: Vec<(u64, u64)>,
    pub assumption: &'static str,
}

impl InertiaModule {
    /// `T = Z^{2d}` with integer symmetric monodromy block `N`.
    pub fn standard(ell: u64, t: usize, a: usize, monodromy: &[Vec<i64>]) -> Result<InertiaModule> {
        let n: IntMatrix = monodromy.iter().map(|r| r.iter().map(|&x| big(x)).collect()).collect();
        let d2 = 2 * (t + a);
        let cols = (0..d2).map(|j| (0..d2).map(|i| big(i64::from(i == j))).collect()).collect();
        InertiaModule::from_lattice(ell, t, a, 0, cols, n)
    }

    /// `T` spanned by `ℓ^{−denom_exp}·v` for the integer vectors `v` in `generators`.
    pub fn from_lattice(
        ell: u64,
        t: usize,
        a: usize,
        denom_exp: u32,
        generators: Vec<Vec<BigInt>>,
        monodromy: IntMatrix,
    ) -> Result<InertiaModule> {
        let bad = |m: String| Err(TateError::Invalid(m));
        if !is_prime(ell) {
            return bad(format!("{ell} is not prime"));
        }
        if t == 0 {
            return bad("toric rank 0 (good reduction) is not semistable bad reduction".into());
        }
        if monodromy.len() != t || monodromy.iter().any(|r| r.len() != t) {
            return bad(format!("monodromy block must be {t} x {t}"));
        }
        if monodromy != transpose(&monodromy) {
            return bad("monodromy block is not symmetric".into());
        }
        if det_int(&monodromy).is_zero() {
            return bad("monodromy block is singular".into());
        }
        let n = 2 * (t + a);
        if generators.iter().any(|c| c.len() != n) {
            return bad(format!("lattice vectors must have length {n}"));
        }
        let Some(cols) = hermite(n, generators) else {
            return bad("lattice does not have full rank".into());
        };
        let mut cols = cols;
        let mut denom_exp = denom_exp;
        let ellb = BigInt::from(ell);
        while denom_exp > 0 && cols.iter().flatten().all(|x| x.is_multiple_of(&ellb)) {
            cols.iter_mut().flatten().for_each(|x| *x /= &ellb);
            denom_exp -= 1;
        }
        let mut m = InertiaModule {
            ell,
            t,
            a,
            denom_exp,
            basis: transpose(&cols),
            monodromy,
            n_lat: Vec::new(),
            form_scale: 0,
        };
        m.n_lat = m.compute_n_lat()?;
        m.form_scale = m.compute_form_scale();
        Ok(m)
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn toric_rank(&self) -> usize {
        self.t
    }

    pub fn abelian_rank(&self) -> usize {
        self.a
    }

    /// `2d = 2(t + a)`.
    pub fn rank(&self) -> usize {
        2 * (self.t + self.a)
    }

    pub fn field(&self) -> Gf {
        Gf::new(self.ell).expect("prime field")
    }

    pub fn monodromy(&self) -> &IntMatrix {
        &self.monodromy
    }

    /// `σ − 1` as a matrix from `T/M₁` to `M₂` in Hermite bases.
    pub fn lattice_monodromy(&self) -> &IntMatrix {
        &self.n_lat
    }

    /// Least `k ≥ 0` with `ℓ^k·J` integral on `T`.
    pub fn form_scale(&self) -> u32 {
        self.form_scale
    }

    pub fn denominator_exponent(&self) -> u32 {
        self.denom_exp
    }

    /// Integer basis matrix; the lattice is `ℓ^{−denominator_exponent}` times its column span.
    pub fn integer_basis(&self) -> &IntMatrix {
        &self.basis
    }

    pub fn basis_vector(&self, j: usize) -> Vec<Rat> {
        let d = Rat::from(ell_pow(self.ell, self.denom_exp));
        self.basis.iter().map(|r| Rat::from(r[j].clone()) / &d).collect()
    }

    /// Coordinates of an ambient vector in the Hermite basis.
    pub fn coords(&self, v: &[Rat]) -> Vec<Rat> {
        let n = self.rank();
        let d = Rat::from(ell_pow(self.ell, self.denom_exp));
        let b = |i: usize, j: usize| Rat::from(self.basis[i][j].clone()) / &d;
        let mut x = vec![Rat::zero(); n];
        for i in (0..n).rev() {
            let mut s = v[i].clone();
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                s -= b(i, j) * xj;
            }
            x[i] = s / b(i, i);
        }
        x
    }

    fn sigma_minus_one(&self, v: &[Rat]) -> Vec<Rat> {
        let (t, n) = (self.t, self.rank());
        let mut out = vec![Rat::zero(); n];
        for (i, o) in out.iter_mut().enumerate().take(t) {
            for j in 0..t {
                *o += Rat::from(self.monodromy[i][j].clone()) * &v[n - t + j];
            }
        }
        out
    }

    fn compute_n_lat(&self) -> Result<IntMatrix> {
        let (t, n) = (self.t, self.rank());
        let mut cols = Vec::with_capacity(t);
        for j in 0..t {
            let image = self.sigma_minus_one(&self.basis_vector(n - t + j));
            let x = self.coords(&image);
            if x.iter().any(|c| !c.is_integer()) {
                return Err(TateError::Invalid("lattice is not stable under inertia".into()));
            }
            cols.push(x[..t].iter().map(Rat::to_integer).collect::<Vec<_>>());
        }
        Ok(transpose(&cols))
    }

    pub fn pair(&self, v: &[Rat], w: &[Rat]) -> Rat {
        let (t, a, n) = (self.t, self.a, self.rank());
        let mut s = Rat::zero();
        for i in 0..t {
            s += &v[i] * &w[n - t + i];
            s -= &v[n - t + i] * &w[i];
        }
        for k in 0..a {
            s += &v[t + k] * &w[t + a + k];
            s -= &v[t + a + k] * &w[t + k];
        }
        s
    }

    /// Gram matrix of the form on the Hermite basis.
    pub fn gram(&self) -> Vec<Vec<Rat>> {
        let vs: Vec<Vec<Rat>> = (0..self.rank()).map(|j| self.basis_vector(j)).collect();
        vs.iter().map(|v| vs.iter().map(|w| self.pair(v, w)).collect()).collect()
    }

    fn compute_form_scale(&self) -> u32 {
        self.gram()
            .iter()
            .flatten()
            .filter_map(|x| rat_valuation(x, self.ell))
            .map(|v| (-v).max(0) as u32)
            .max()
            .unwrap_or(0)
    }

    /// `σ` in the Hermite basis.
    pub fn sigma_lattice(&self) -> Vec<Vec<Rat>> {
        let (t, n) = (self.t, self.rank());
        let mut s: Vec<Vec<Rat>> =
            (0..n).map(|i| (0..n).map(|j| Rat::from(big(i64::from(i == j)))).collect()).collect();
        for i in 0..t {
            for j in 0..t {
                s[i][n - t + j] = Rat::from(self.n_lat[i][j].clone());
            }
        }
        s
    }

    /// `σᵀGσ = G` for the Gram matrix `G` of the form on `T`.
    pub fn sigma_preserves_form(&self) -> bool {
        let g = self.gram();
        let s = self.sigma_lattice();
        let n = self.rank();
        (0..n).all(|i| {
            (0..n).all(|j| {
                let mut acc = Rat::zero();
                for k in 0..n {
                    for l in 0..n {
                        acc += &s[k][i] * &g[k][l] * &s[l][j];
                    }
                }
                acc == g[i][j]
            })
        })
    }

    /// `1 + min v_ℓ` over the entries of the lattice monodromy block.
    pub fn effective_stage(&self) -> u64 {
        1 + self
            .n_lat
            .iter()
            .flatten()
            .filter_map(|x| val_or_inf(x, self.ell))
            .min()
            .expect("nonsingular block has a nonzero entry")
    }

    /// `v_ℓ(det N)` in Hermite bases.
    pub fn component_order(&self) -> u64 {
        valuation_int(&det_int(&self.n_lat), self.ell).expect("nonsingular block")
    }

    /// Images of `M₁` and `M₂` in `T/ℓT`.
    pub fn reduced_flags(&self) -> (Subspace, Subspace) {
        let f = self.field();
        let n = self.rank();
        let unit = |i: usize| (0..n).map(|j| Elt::from(i == j)).collect::<Vec<Elt>>();
        let m1: Vec<Vec<Elt>> = (0..self.t + 2 * self.a).map(unit).collect();
        let m2: Vec<Vec<Elt>> = (0..self.t).map(unit).collect();
        (Subspace::span(&f, n, &m1), Subspace::span(&f, n, &m2))
    }

    fn sigma_bar_minus_one(&self, v: &[Elt]) -> Vec<Elt> {
        let f = self.field();
        let (t, n) = (self.t, self.rank());
        let mut out = vec![0; n];
        for (i, o) in out.iter_mut().enumerate().take(t) {
            for j in 0..t {
                *o = f.add(*o, f.mul(reduce_mod(&self.n_lat[i][j], self.ell), v[n - t + j]));
            }
        }
        out
    }

    pub fn is_stable(&self, k: &Kernel) -> bool {
        let f = self.field();
        k.basis().iter().all(|v| k.space.contains(&f, &self.sigma_bar_minus_one(v)))
    }

    /// Smallest σ-stable subspace containing `vectors`.
    pub fn stable_closure(&self, vectors: &[Vec<Elt>]) -> Kernel {
        let f = self.field();
        let mut k = Kernel::from_vectors(self, vectors);
        loop {
            let extra: Vec<Vec<Elt>> = k
                .basis()
                .iter()
                .map(|v| self.sigma_bar_minus_one(v))
                .filter(|w| !k.space.contains(&f, w))
                .collect();
            if extra.is_empty() {
                return k;
            }
            let mut all = k.basis().clone();
            all.extend(extra);
            k = Kernel::from_vectors(self, &all);
        }
    }

    /// `T′ = T + ℓ^{−1}κ̃`.
    pub fn isogeny(&self, k: &Kernel) -> Result<Isogeny> {
        if k.space.ambient() != self.rank() {
            return Err(TateError::Invalid("kernel lives in a different rank".into()));
        }
        if !self.is_stable(k) {
            return Err(TateError::Unstable);
        }
        if k.dim() == self.rank() {
            return Err(TateError::NotProper);
        }
        if k.dim() == 0 {
            return Ok(Isogeny { target: self.clone(), trivial: true });
        }
        let ellb = BigInt::from(self.ell);
        let cols = transpose(&self.basis);
        let mut gens: Vec<Vec<BigInt>> =
            cols.iter().map(|c| c.iter().map(|x| x * &ellb).collect()).collect();
        for v in k.basis() {
            let mut lifted = vec![BigInt::zero(); self.rank()];
            for (j, &c) in v.iter().enumerate() {
                if c != 0 {
                    for (acc, x) in lifted.iter_mut().zip(&cols[j]) {
                        *acc += lift(c) * x;
                    }
                }
            }
            gens.push(lifted);
        }
        let target = InertiaModule::from_lattice(
            self.ell,
            self.t,
            self.a,
            self.denom_exp + 1,
            gens,
            self.monodromy.clone(),
        )?;
        Ok(Isogeny { target, trivial: false })
    }

    fn kernel_dims(&self, k: &Kernel) -> (usize, usize) {
        let f = self.field();
        let (m1, m2) = self.reduced_flags();
        (k.space.intersect(&f, &m1).dim(), k.space.intersect(&f, &m2).dim())
    }

    pub fn verify_component_identity(&self, k: &Kernel) -> Result<ComponentIdentityRecord> {
        let target = self.isogeny(k)?.target;
        let (dim_kernel_m1, dim_kernel_m2) = self.kernel_dims(k);
        let comp_source = self.component_order();
        let comp_target = target.component_order();
        let lhs = comp_target + (k.dim() - dim_kernel_m1) as u64;
        let rhs = comp_source + dim_kernel_m2 as u64;
        Ok(ComponentIdentityRecord {
            comp_source,
            comp_target,
            dim_kernel: k.dim(),
            dim_kernel_m1,
            dim_kernel_m2,
            lhs,
            rhs,
            holds: lhs == rhs,
        })
    }

    /// Builds `φ_*` and `φ′_*` and checks `φ′_* N′ φ_* = ℓN`, injectivity,
    /// and the cokernel dimensions `dim κ − dim κ∩M̄₁` and `t − dim κ∩M̄₂`.
    pub fn diagram_check(&self, k: &Kernel) -> Result<DiagramReport> {
        let target = self.isogeny(k)?.target;
        let (t, n) = (self.t, self.rank());
        let ell = self.ell;
        let not_integral = || TateError::Invalid("induced map is not integral".into());
        let mut phi_cols = Vec::with_capacity(t);
        for j in 0..t {
            let x = target.coords(&self.basis_vector(n - t + j));
            if x.iter().any(|c| !c.is_integer()) {
                return Err(not_integral());
            }
            phi_cols.push(x[n - t..].iter().map(Rat::to_integer).collect::<Vec<_>>());
        }
        let mut dual_cols = Vec::with_capacity(t);
        for i in 0..t {
            let v: Vec<Rat> =
                target.basis_vector(i).iter().map(|x| x * Rat::from(BigInt::from(ell))).collect();
            let y = self.coords(&v);
            if y.iter().any(|c| !c.is_integer()) || y[t..].iter().any(|c| !c.is_zero()) {
                return Err(not_integral());
            }
            dual_cols.push(y[..t].iter().map(Rat::to_integer).collect::<Vec<_>>());
        }
        let phi = transpose(&phi_cols);
        let phi_dual = transpose(&dual_cols);
        let lhs = mat_mul_int(&mat_mul_int(&phi_dual, &target.n_lat), &phi);
        let rhs: IntMatrix =
            self.n_lat.iter().map(|r| r.iter().map(|x| x * BigInt::from(ell)).collect()).collect();
        let (dp, dq) = (det_int(&phi), det_int(&phi_dual));
        let injective = !dp.is_zero() && !dq.is_zero();
        let (dim_m1, dim_m2) = self.kernel_dims(k);
        let cokernels_match = injective
            && valuation_int(&dp, ell).ok() == Some((k.dim() - dim_m1) as u64)
            && valuation_int(&dq, ell).ok() == Some((t - dim_m2) as u64)
            && dp.abs() == ell_pow(ell, (k.dim() - dim_m1) as u32)
            && dq.abs() == ell_pow(ell, (t - dim_m2) as u32);
        Ok(DiagramReport { phi, phi_dual, identity_holds: lhs == rhs, injective, cokernels_match })
    }

    /// Kernel of the isogeny back from the target of `isogeny(κ)`: the image
    /// of `T` in `T′/ℓT′`. Composing the two gives `ℓ^{−1}T`.
    pub fn complementary_kernel(&self, target: &InertiaModule) -> Result<Kernel> {
        let mut vecs = Vec::with_capacity(self.rank());
        for j in 0..self.rank() {
            let x = target.coords(&self.basis_vector(j));
            if x.iter().any(|c| !c.is_integer()) {
                return Err(TateError::Invalid("source lattice is not inside the target".into()));
            }
            vecs.push(x.iter().map(|c| reduce_mod(&c.to_integer(), self.ell)).collect());
        }
        Ok(Kernel::from_vectors(target, &vecs))
    }

    /// `ℓ^{−1}T`.
    pub fn divided_by_ell(&self) -> InertiaModule {
        let cols = transpose(&self.basis);
        InertiaModule::from_lattice(
            self.ell,
            self.t,
            self.a,
            self.denom_exp + 1,
            cols,
            self.monodromy.clone(),
        )
        .expect("scaling preserves every invariant")
    }

    /// Form on `M₁/M₂` in the middle Hermite coordinates, divided by the
    /// largest power of ℓ dividing all entries and reduced mod ℓ.
    pub fn middle_form(&self) -> Result<SympSpace> {
        let (t, a) = (self.t, self.a);
        let g = self.gram();
        let block: Vec<Vec<Rat>> = (t..t + 2 * a).map(|i| g[i][t..t + 2 * a].to_vec()).collect();
        let v = block.iter().flatten().filter_map(|x| rat_valuation(x, self.ell)).min();
        let Some(v) = v else {
            return Err(TateError::Strategy("form vanishes on M1/M2".into()));
        };
        let scale = if v >= 0 {
            Rat::from(ell_pow(self.ell, v as u32)).recip()
        } else {
            Rat::from(ell_pow(self.ell, (-v) as u32))
        };
        let f = self.field();
        let reduced: Matrix = block
            .iter()
            .map(|r| r.iter().map(|x| reduce_mod(&(x * &scale).to_integer(), self.ell)).collect())
            .collect();
        Ok(SympSpace::new(f, reduced)?)
    }

    fn lift_middle(&self, w: &Subspace) -> Kernel {
        let (t, a, n) = (self.t, self.a, self.rank());
        let mut vecs: Vec<Vec<Elt>> = (0..t).map(|i| (0..n).map(|j| Elt::from(i == j)).collect()).collect();
        for row in w.basis() {
            let mut v = vec![0; n];
            v[t..t + 2 * a].copy_from_slice(row);
            vecs.push(v);
        }
        Kernel::from_vectors(self, &vecs)
    }

    pub fn choose_kernel(&self, strategy: &KernelStrategy) -> Result<Kernel> {
        let (m1, m2) = self.reduced_flags();
        let k = match strategy {
            KernelStrategy::FlagM2 => Kernel { space: m2 },
            KernelStrategy::FlagM1 => Kernel { space: m1 },
            KernelStrategy::LagrangianTau(tau) => {
                if self.ell == 2 {
                    return Err(TateError::Strategy("involution kernels need odd l".into()));
                }
                if self.a == 0 {
                    if !tau.is_empty() {
                        return Err(TateError::Strategy("M1/M2 is zero; tau must be empty".into()));
                    }
                    return Ok(Kernel { space: m2 });
                }
                let (plus, _) = self.middle_form()?.involution_eigen_lagrangians(tau)?;
                self.lift_middle(&plus)
            }
            KernelStrategy::Lagrangian2Group(gens) => {
                if self.ell != 2 {
                    return Err(TateError::Strategy("2-group kernels need l = 2".into()));
                }
                if self.a == 0 {
                    return Ok(Kernel { space: m2 });
                }
                let w = self.middle_form()?.stable_lagrangian(gens)?;
                self.lift_middle(&w)
            }
        };
        Ok(k)
    }

    /// Iterates `isogeny(choose_kernel(strategy))`, requiring every kernel to
    /// lie between `M̄₂` and `M̄₁`.
    pub fn tower(&self, steps: usize, strategy: &KernelStrategy) -> Result<TowerRun> {
        let mut m = self.clone();
        let mut out = vec![(m.effective_stage(), m.component_order())];
        for step in 0..steps {
            let k = m.choose_kernel(strategy)?;
            let f = m.field();
            let (m1, m2) = m.reduced_flags();
            if !k.space.contains_subspace(&f, &m2) || !m1.contains_subspace(&f, &k.space) {
                return Err(TateError::Strategy(format!(
                    "step {}: kernel is not between the reduced flags",
                    step + 1
                )));
            }
            m = m.isogeny(&k)?.target;
            out.push((m.effective_stage(), m.component_order()));
        }
        Ok(TowerRun { steps: out, assumption: GLOBAL_STABILITY_ASSUMPTION })
    }

    /// Random symmetric nonsingular monodromy block with entry valuations at
    /// most 3, on `Z^{2d}`, followed by up to `pre_steps` random isogenies.
    pub fn random<R: Rng>(rng: &mut R, ell: u64, t: usize, a: usize, pre_steps: usize) -> InertiaModule {
        let m = loop {
            let mut n = vec![vec![0i64; t]; t];
            for i in 0..t {
                for j in i..t {
                    let x = if rng.gen_bool(0.25) && i != j {
                        0
                    } else {
                        let u = loop {
                            let u: i64 = rng.gen_range(-4..=4);
                            if u != 0 && u % ell as i64 != 0 {
                                break u;
                            }
                        };
                        u * (ell as i64).pow(rng.gen_range(0..=3))
                    };
                    n[i][j] = x;
                    n[j][i] = x;
                }
            }
            if let Ok(m) = InertiaModule::standard(ell, t, a, &n) {
                break m;
            }
        };
        let mut m = m;
        for _ in 0..rng.gen_range(0..=pre_steps) {
            let k = m.random_kernel(rng, KernelBias::Any);
            m = m.isogeny(&k).expect("random kernels are stable and proper").target;
        }
        m
    }

    /// Random proper σ-stable kernel with the requested relation to the flags.
    pub fn random_kernel<R: Rng>(&self, rng: &mut R, bias: KernelBias) -> Kernel {
        let n = self.rank();
        let (t, a) = (self.t, self.a);
        let ell = self.ell as Elt;
        loop {
            let count = rng.gen_range(0..=n);
            let support = match bias {
                KernelBias::BetweenFlags => t + 2 * a,
                _ => n,
            };
            let mut vecs: Vec<Vec<Elt>> = (0..count)
                .map(|_| {
                    let mut v = vec![0; n];
                    for x in v.iter_mut().take(support) {
                        *x = rng.gen_range(0..ell);
                    }
                    v
                })
                .collect();
            if bias != KernelBias::Any {
                vecs.extend((0..t).map(|i| (0..n).map(|j| Elt::from(i == j)).collect()));
            }
            let k = self.stable_closure(&vecs);
            if k.dim() < n {
                return k;
            }
        }
    }

    /// Text form: `ell`, `t`, `a`, `form-scale`, `denominator-exponent`
    /// lines, then `lattice` followed by the integer basis rows and
    /// `monodromy` followed by the rows of `N`.
    pub fn to_text(&self) -> String {
        let row = |r: &Vec<BigInt>| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = format!(
            "ell {}\nt {}\na {}\nform-scale {}\ndenominator-exponent {}\nlattice\n",
            self.ell, self.t, self.a, self.form_scale, self.denom_exp
        );
        for r in &self.basis {
            s.push_str(&row(r));
            s.push('\n');
        }
        s.push_str("monodromy\n");
        for r in &self.monodromy {
            s.push_str(&row(r));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<InertiaModule> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let mut it = lines.into_iter();
        let mut field = |key: &str| -> Result<u64> {
            let (ln, l) = it.next().ok_or(TateError::Parse { line: 0, msg: format!("missing {key}") })?;
            let v = l
                .strip_prefix(key)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| TateError::Parse { line: ln, msg: format!("expected '{key} <integer>'") })?;
            Ok(v)
        };
        let ell = field("ell")?;
        let t = field("t")? as usize;
        let a = field("a")? as usize;
        let form_scale = field("form-scale")? as u32;
        let denom_exp = field("denominator-exponent")? as u32;
        let n = 2 * (t + a);
        let mut read_block = |header: &str, rows: usize, cols: usize| -> Result<IntMatrix> {
            let (ln, l) = it.next().ok_or(TateError::Parse { line: 0, msg: format!("missing {header}") })?;
            if l != header {
                return Err(TateError::Parse { line: ln, msg: format!("expected '{header}'") });
            }
            (0..rows)
                .map(|_| {
                    let (ln, l) = it.next().ok_or(TateError::Parse { line: 0, msg: "truncated matrix".into() })?;
                    let r: Vec<BigInt> = l
                        .split_whitespace()
                        .map(|x| x.parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| TateError::Parse { line: ln, msg: "non-integer entry".into() })?;
                    if r.len() != cols {
                        return Err(TateError::Parse { line: ln, msg: format!("expected {cols} entries") });
                    }
                    Ok(r)
                })
                .collect()
        };
        let basis = read_block("lattice", n, n)?;
        let monodromy = read_block("monodromy", t, t)?;
        let m = InertiaModule::from_lattice(ell, t, a, denom_exp, transpose(&basis), monodromy)?;
        if m.form_scale != form_scale {
            return Err(TateError::Parse {
                line: 4,
                msg: format!("form-scale {form_scale} does not match the lattice ({})", m.form_scale),
            });
        }
        Ok(m)
    }
}

impl fmt::Display for InertiaModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Counts from [`fuzz_isogenies`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FuzzReport {
    pub iterations: usize,
    pub lemma_failures: usize,
    pub diagram_failures: usize,
    pub form_failures: usize,
    /// Kernels containing `M̄₂`, where the stage must not drop.
    pub monotone_checked: usize,
    pub monotone_failures: usize,
    /// Kernels between the flags, where the stage must rise by exactly 1.
    pub increment_checked: usize,
    pub increment_failures: usize,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.lemma_failures == 0
            && self.diagram_failures == 0
            && self.form_failures == 0
            && self.monotone_failures == 0
            && self.increment_failures == 0
    }
}

/// Random modules over `ℓ ∈ {2, 3, 5}` with random Galois-stable kernels,
/// cycling through the three kernel biases.
pub fn fuzz_isogenies(seed: u64, iterations: usize) -> Result<FuzzReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = FuzzReport { iterations, ..FuzzReport::default() };
    for i in 0..iterations {
        let ell = [2u64, 3, 5][i % 3];
        let (t, a) = (rng.gen_range(1..=3), rng.gen_range(0..=2));
        let src = InertiaModule::random(&mut rng, ell, t, a, 2);
        let bias = [KernelBias::Any, KernelBias::ContainsM2, KernelBias::BetweenFlags][i % 3];
        let k = src.random_kernel(&mut rng, bias);
        r.lemma_failures += usize::from(!src.verify_component_identity(&k)?.holds);
        r.diagram_failures += usize::from(!src.diagram_check(&k)?.holds());
        let tgt = src.isogeny(&k)?.target;
        r.form_failures += usize::from(!tgt.sigma_preserves_form());
        let (m1, m2) = src.reduced_flags();
        let f = src.field();
        if k.space.contains_subspace(&f, &m2) {
            r.monotone_checked += 1;
            r.monotone_failures += usize::from(tgt.effective_stage() < src.effective_stage());
            if m1.contains_subspace(&f, &k.space) {
                r.increment_checked += 1;
                r.increment_failures +=
                    usize::from(tgt.effective_stage() != src.effective_stage() + 1);
            }
        }
    }
    Ok(r)
}
