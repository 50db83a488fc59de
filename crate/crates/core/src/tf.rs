//! Pointwise Tikhonov-Fenichel reduction.
//!
//! For a system `x' = h⁰(x) + ε h¹(x)` whose fast part factors as
//! `h⁰ = P·μ` with `μ: ℝᵐ → ℝʳ`, the reduced vector field on `{μ = 0}` is
//! `Q h¹` with the projection `Q = I − P (Dμ P)⁻¹ Dμ`, valid where every
//! eigenvalue of `Dμ P` has real part at most `−ν < 0`.
//!
//! This module evaluates that formula numerically and serves as an oracle
//! for the closed-form reduced right-hand sides in [`crate::models`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DiscreteLaplacian, Field, Grid1D};
use crate::models::{
    rhs_reduced_irrev, rhs_reduced_rev, slow_manifold_c, DiffusionConstants, ModelKind, ModelSpec,
    RateConstants, ReducedState,
};

/// A fast-slow splitting `h⁰ = P·μ`, `h¹`, of an `m`-dimensional system.
pub trait FastSlowDecomposition {
    fn dim(&self) -> usize;

    /// Number of fast reaction functions `r < m`.
    fn rank(&self) -> usize;

    fn mu(&self, x: &[f64]) -> Vec<f64>;

    /// The `m × r` matrix `P(x)`.
    fn p_matrix(&self, x: &[f64]) -> DMatrix<f64>;

    fn h1(&self, x: &[f64]) -> Vec<f64>;

    /// Closed-form `Dμ` when one is known; checked against finite differences.
    fn mu_jacobian_closed_form(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// Required spectral margin `ν`.
    fn spectral_margin(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionOptions {
    /// Maximal `‖μ(x)‖∞` accepted as "on the manifold".
    pub manifold_tol: f64,
    /// Largest accepted condition number of `Dμ P`.
    pub max_condition: f64,
    /// Allowed disagreement between closed-form and difference Jacobians.
    pub jacobian_tol: f64,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self {
            manifold_tol: 1e-10,
            max_condition: 1e12,
            jacobian_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReductionResult {
    pub reduced_field: DVector<f64>,
    pub projection: DMatrix<f64>,
    pub spectrum: Vec<Complex64>,
    pub spectral_ok: bool,
    /// `Dμ(x)`, kept for tangency checks.
    pub mu_jacobian: DMatrix<f64>,
}

/// Central-difference Jacobian of `μ` with per-coordinate step
/// `cbrt(ε_mach)·max(1, |x_i|)`. When the decomposition registers a closed
/// form, both must agree to `opts.jacobian_tol`.
pub fn jacobian_mu<D: FastSlowDecomposition + ?Sized>(
    decomp: &D,
    x: &[f64],
    opts: &ReductionOptions,
) -> Result<DMatrix<f64>> {
    let m = decomp.dim();
    let r = decomp.rank();
    if x.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: x.len() });
    }
    let cbrt_eps = f64::EPSILON.cbrt();
    let mut jac = DMatrix::zeros(r, m);
    let mut xp = x.to_vec();
    for j in 0..m {
        let h = cbrt_eps * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let up = decomp.mu(&xp);
        xp[j] = x[j] - h;
        let down = decomp.mu(&xp);
        xp[j] = x[j];
        let width = (x[j] + h) - (x[j] - h);
        for i in 0..r {
            let d = (up[i] - down[i]) / width;
            if !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite difference quotient for dmu[{i}]/dx[{j}]"
                )));
            }
            jac[(i, j)] = d;
        }
    }
    if let Some(closed) = decomp.mu_jacobian_closed_form(x) {
        let worst = (&closed - &jac).amax();
        if worst > opts.jacobian_tol {
            return Err(Error::Numerical(format!(
                "closed-form and difference Jacobians of mu differ by {worst:.3e}"
            )));
        }
    }
    Ok(jac)
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == 0.0))
}

/// Evaluates the reduced field `Q(x) h¹(x)` at a point on the slow manifold.
pub fn tf_reduce_generic<D: FastSlowDecomposition + ?Sized>(
    decomp: &D,
    x: &[f64],
    opts: &ReductionOptions,
) -> Result<ReductionResult> {
    let m = decomp.dim();
    let r = decomp.rank();
    if r >= m {
        return Err(Error::InvalidParameter(format!("rank {r} must be below dimension {m}")));
    }
    if x.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: x.len() });
    }
    let mu = decomp.mu(x);
    let off = mu.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if !(off <= opts.manifold_tol) {
        return Err(Error::Precondition(format!(
            "point is off the slow manifold: |mu| = {off:.3e}"
        )));
    }

    let dmu = jacobian_mu(decomp, x, opts)?;
    let p = decomp.p_matrix(x);
    if p.nrows() != m || p.ncols() != r {
        return Err(Error::DimensionMismatch { expected: m * r, found: p.nrows() * p.ncols() });
    }
    let block = &dmu * &p;

    // (Dμ P)⁻¹ applied through either the diagonal or an LU factorization
    let (spectrum, condition, inverse): (Vec<Complex64>, f64, DMatrix<f64>) = if is_diagonal(&block) {
        let d: Vec<f64> = (0..r).map(|i| block[(i, i)]).collect();
        let max = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let min = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        let cond = if min == 0.0 { f64::INFINITY } else { max / min };
        let inv = DMatrix::from_diagonal(&DVector::from_iterator(r, d.iter().map(|v| 1.0 / v)));
        (d.iter().map(|&v| Complex64::new(v, 0.0)).collect(), cond, inv)
    } else {
        let sv = block.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        let cond = if min == 0.0 { f64::INFINITY } else { max / min };
        let eig = block.complex_eigenvalues();
        let spectrum = eig.iter().map(|c| Complex64::new(c.re, c.im)).collect();
        let inv = block
            .clone()
            .try_inverse()
            .ok_or(Error::ReductionUndefined { condition: cond })?;
        (spectrum, cond, inv)
    };
    if !(condition <= opts.max_condition) {
        return Err(Error::ReductionUndefined { condition });
    }

    let nu = decomp.spectral_margin();
    let spectral_ok = spectrum.iter().all(|z| z.re <= -nu);

    let fast = &p * &inverse;
    let projection = DMatrix::identity(m, m) - &fast * &dmu;
    let h1 = DVector::from_vec(decomp.h1(x));
    let reduced_field = &h1 - &fast * (&dmu * &h1);

    Ok(ReductionResult {
        reduced_field,
        projection,
        spectrum,
        spectral_ok,
        mu_jacobian: dmu,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmVariant {
    IrrevSmallDelta,
    IrrevBigDelta,
    RevSmallDelta,
    RevBigDelta,
}

impl MmVariant {
    pub const ALL: [MmVariant; 4] = [
        MmVariant::IrrevSmallDelta,
        MmVariant::IrrevBigDelta,
        MmVariant::RevSmallDelta,
        MmVariant::RevBigDelta,
    ];

    pub fn reversible(&self) -> bool {
        matches!(self, MmVariant::RevSmallDelta | MmVariant::RevBigDelta)
    }

    pub fn keeps_delta(&self) -> bool {
        matches!(self, MmVariant::IrrevBigDelta | MmVariant::RevBigDelta)
    }

    pub fn reduced_kind(&self) -> ModelKind {
        match self {
            MmVariant::IrrevSmallDelta => ModelKind::ReducedIrrevSmallDelta,
            MmVariant::IrrevBigDelta => ModelKind::ReducedIrrevBigDelta,
            MmVariant::RevSmallDelta => ModelKind::ReducedRevSmallDelta,
            MmVariant::RevBigDelta => ModelKind::ReducedRevBigDelta,
        }
    }

    pub fn name(&self) -> &'static str {
        self.reduced_kind().name()
    }
}

/// The discretized Michaelis-Menten system written as `h⁰ = P μ`, `h¹`, on
/// the blocked layout `[s; c*; y*]` or `[s; c*; y*; p]`, with
/// `P = (0; I_N; 0[; 0])`.
#[derive(Debug, Clone)]
pub struct MmDecomposition {
    pub variant: MmVariant,
    pub rates: RateConstants,
    pub diffusion: DiffusionConstants,
    pub lap: DiscreteLaplacian,
}

impl MmDecomposition {
    pub fn new(
        variant: MmVariant,
        rates: RateConstants,
        diffusion: DiffusionConstants,
        lap: DiscreteLaplacian,
    ) -> Result<Self> {
        rates.validate()?;
        diffusion.validate()?;
        let rates = if variant.reversible() {
            rates
        } else {
            RateConstants { k_m2: 0.0, ..rates }
        };
        Ok(Self { variant, rates, diffusion, lap })
    }

    pub fn cells(&self) -> usize {
        self.lap.size()
    }

    fn blocks(&self) -> usize {
        if self.variant.reversible() {
            4
        } else {
            3
        }
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], Option<&'a [f64]>) {
        let n = self.cells();
        let p = self.variant.reversible().then(|| &x[3 * n..4 * n]);
        (&x[..n], &x[n..2 * n], &x[2 * n..3 * n], p)
    }

    fn k_m2(&self) -> f64 {
        if self.variant.reversible() {
            self.rates.k_m2
        } else {
            0.0
        }
    }

    /// Places a slow state `(s, y*, p)` on the manifold as a blocked vector.
    pub fn lift(&self, s: &[f64], y: &[f64], p: Option<&[f64]>) -> Result<Vec<f64>> {
        let to_field = |v: &[f64]| Field::new(v.to_vec());
        let pf = p.map(to_field).transpose()?;
        let c = slow_manifold_c(&to_field(s)?, &to_field(y)?, pf.as_ref(), &self.rates)?;
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(s);
        x.extend_from_slice(&c);
        x.extend_from_slice(y);
        if self.variant.reversible() {
            x.extend_from_slice(p.ok_or_else(|| Error::InvalidParameter("p field required".into()))?);
        }
        Ok(x)
    }

    /// Closed-form reduced right-hand side for the slow coordinates, in the
    /// order `[s; y*; p]`.
    pub fn closed_form(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (s, _, y, p) = self.split(x);
        let f = |v: &[f64]| Field::new(v.to_vec());
        let state = ReducedState { s: f(s)?, y_star: f(y)?, p: p.map(f).transpose()? };
        let spec = ModelSpec::new(self.variant.reduced_kind(), self.rates, self.diffusion, None)?;
        let t = if self.variant.reversible() {
            rhs_reduced_rev(&state, &spec, &self.lap)?
        } else {
            rhs_reduced_irrev(&state, &spec, &self.lap)?
        };
        let mut out: Vec<f64> = t.s.into_inner();
        out.extend(t.y_star.into_inner());
        if let Some(p) = t.p {
            out.extend(p.into_inner());
        }
        Ok(out)
    }

    /// Indices of the slow coordinates `s, y*, p` in the blocked layout.
    pub fn slow_indices(&self) -> Vec<usize> {
        let n = self.cells();
        let mut idx: Vec<usize> = (0..n).chain(2 * n..3 * n).collect();
        if self.variant.reversible() {
            idx.extend(3 * n..4 * n);
        }
        idx
    }
}

impl FastSlowDecomposition for MmDecomposition {
    fn dim(&self) -> usize {
        self.blocks() * self.cells()
    }

    fn rank(&self) -> usize {
        self.cells()
    }

    fn mu(&self, x: &[f64]) -> Vec<f64> {
        let (s, c, y, p) = self.split(x);
        let r = &self.rates;
        let k_m2 = self.k_m2();
        (0..self.cells())
            .map(|a| {
                let pa = p.map_or(0.0, |p| p[a]);
                -(r.k1 * s[a] + r.k_m1 + r.k2 + k_m2 * pa) * c[a] + (r.k1 * s[a] + k_m2 * pa) * y[a]
            })
            .collect()
    }

    fn p_matrix(&self, _x: &[f64]) -> DMatrix<f64> {
        let n = self.cells();
        let mut p = DMatrix::zeros(self.dim(), n);
        for a in 0..n {
            p[(n + a, a)] = 1.0;
        }
        p
    }

    fn h1(&self, x: &[f64]) -> Vec<f64> {
        let n = self.cells();
        let (s, c, y, p) = self.split(x);
        let r = &self.rates;
        let d = &self.diffusion;
        let k_m2 = self.k_m2();
        let mut out = vec![0.0; self.dim()];
        {
            let (hs, rest) = out.split_at_mut(n);
            let (hc, rest) = rest.split_at_mut(n);
            let (hy, hp) = rest.split_at_mut(n);
            for a in 0..n {
                hs[a] = (r.k1 * s[a] + r.k_m1) * c[a] - r.k1 * s[a] * y[a];
            }
            self.lap.add_scaled(d.d_s, s, hs);
            self.lap.add_scaled(d.d_c, c, hc);
            self.lap.add_scaled(d.d_e, y, hy);
            if self.variant.keeps_delta() {
                self.lap.add_scaled(d.delta(), c, hy);
            }
            if let Some(p) = p {
                for a in 0..n {
                    hp[a] = (r.k2 + k_m2 * p[a]) * c[a] - k_m2 * p[a] * y[a];
                }
                self.lap.add_scaled(d.d_p, p, hp);
            }
        }
        out
    }

    fn mu_jacobian_closed_form(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.cells();
        let (s, c, y, p) = self.split(x);
        let r = &self.rates;
        let k_m2 = self.k_m2();
        let mut j = DMatrix::zeros(n, self.dim());
        for a in 0..n {
            let pa = p.map_or(0.0, |p| p[a]);
            j[(a, a)] = r.k1 * (y[a] - c[a]);
            j[(a, n + a)] = -(r.k1 * s[a] + r.k_m1 + r.k2 + k_m2 * pa);
            j[(a, 2 * n + a)] = r.k1 * s[a] + k_m2 * pa;
            if self.variant.reversible() {
                j[(a, 3 * n + a)] = k_m2 * (y[a] - c[a]);
            }
        }
        Some(j)
    }

    fn spectral_margin(&self) -> f64 {
        0.5 * self.rates.fast_margin()
    }
}

/// The four Michaelis-Menten decompositions (irreversible and reversible,
/// with and without the `δ` coupling) on a common grid.
pub fn register_mm_decompositions(
    grid: Grid1D,
    rates: RateConstants,
    diffusion: DiffusionConstants,
) -> Result<Vec<MmDecomposition>> {
    let lap = DiscreteLaplacian::new(grid);
    MmVariant::ALL
        .iter()
        .map(|&v| MmDecomposition::new(v, rates, diffusion, lap))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VerifyOptions {
    /// Negative control: perturbs the closed form before comparing.
    pub corrupt_closed_form: bool,
    /// Skip the `O(m³)` check `Q² = Q` (the other identities stay on).
    pub skip_idempotency: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub variant: MmVariant,
    pub cells: usize,
    pub samples: usize,
    /// max over samples of `‖generic − closed‖∞ / (1 + ‖closed‖∞)`
    pub max_rel_deviation: f64,
    /// max over samples of `max |Q² − Q|`
    pub max_idempotency_defect: f64,
    /// max over samples of `max |Q P|`
    pub max_annihilation_defect: f64,
    /// max over samples of `‖Dμ · Q h¹‖∞ / (1 + ‖Q h¹‖∞)`
    pub max_tangency_defect: f64,
    /// largest real part over every computed eigenvalue of `Dμ P`
    pub max_eigen_real: f64,
    pub spectral_ok: bool,
}

/// Draws seeded random nonnegative slow states, lifts them onto the
/// manifold and compares the generic reduction with the closed form.
pub fn verify_oracle(
    decomp: &MmDecomposition,
    samples: usize,
    seed: u64,
    verify: VerifyOptions,
) -> Result<OracleCheck> {
    let n = decomp.cells();
    let opts = ReductionOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slow = decomp.slow_indices();
    let mut check = OracleCheck {
        variant: decomp.variant,
        cells: n,
        samples,
        max_rel_deviation: 0.0,
        max_idempotency_defect: 0.0,
        max_annihilation_defect: 0.0,
        max_tangency_defect: 0.0,
        max_eigen_real: f64::NEG_INFINITY,
        spectral_ok: true,
    };
    for _ in 0..samples {
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(0.0..2.0)).collect() };
        let s = draw(n);
        let y = draw(n);
        let p = decomp.variant.reversible().then(|| draw(n));
        let x = decomp.lift(&s, &y, p.as_deref())?;
        let res = tf_reduce_generic(decomp, &x, &opts)?;

        let mut closed = decomp.closed_form(&x)?;
        if verify.corrupt_closed_form {
            closed[0] = closed[0] * (1.0 + 1e-6) + 1e-6;
        }
        let closed_norm = closed.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let dev = slow.iter().zip(&closed).fold(0.0_f64, |a, (&i, c)| {
            let d = (res.reduced_field[i] - c).abs();
            // f64::max would swallow a NaN
            if d.is_nan() { f64::INFINITY } else { a.max(d) }
        });
        let rel = if closed_norm.is_finite() { dev / (1.0 + closed_norm) } else { f64::INFINITY };
        check.max_rel_deviation = check.max_rel_deviation.max(rel);

        let q = &res.projection;
        if !verify.skip_idempotency {
            let q2 = q * q;
            check.max_idempotency_defect = check.max_idempotency_defect.max((&q2 - q).amax());
        }
        let qp = q * decomp.p_matrix(&x);
        check.max_annihilation_defect = check.max_annihilation_defect.max(qp.amax());
        let tangent = &res.mu_jacobian * &res.reduced_field;
        check.max_tangency_defect = check
            .max_tangency_defect
            .max(tangent.amax() / (1.0 + res.reduced_field.amax()));
        for z in &res.spectrum {
            check.max_eigen_real = check.max_eigen_real.max(z.re);
        }
        check.spectral_ok &= res.spectral_ok;
    }
    Ok(check)
}
