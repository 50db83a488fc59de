//! Right-hand sides of the Michaelis-Menten reaction-diffusion family.
//!
//! All spatial models run in slow time `τ = εt`. The full scaled systems
//! carry the complex `c*` and total enzyme `y*` rescaled by `1/ε`; the
//! reduced systems drop `c*` and evaluate it on the slow manifold
//! `c* = (k1 s + k₋₂ p) y* / (k1 s + k₋₂ p + k₋₁ + k2)`.
//!
//! Internally every spatial model evaluates on a species-blocked vector
//! (`[s; c*; y*; p]` for the full reversible system, and so on, following
//! [`ModelKind::species`]).

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{DiscreteLaplacian, Field};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConstants {
    pub k1: f64,
    pub k_m1: f64,
    pub k2: f64,
    #[serde(default)]
    pub k_m2: f64,
}

impl RateConstants {
    pub fn new(k1: f64, k_m1: f64, k2: f64, k_m2: f64) -> Result<Self> {
        let r = Self { k1, k_m1, k2, k_m2 };
        r.validate()?;
        Ok(r)
    }

    pub fn irreversible(k1: f64, k_m1: f64, k2: f64) -> Result<Self> {
        Self::new(k1, k_m1, k2, 0.0)
    }

    /// All four constants equal to one.
    pub fn unit() -> Self {
        Self { k1: 1.0, k_m1: 1.0, k2: 1.0, k_m2: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k1", self.k1), ("k_m1", self.k_m1), ("k2", self.k2), ("k_m2", self.k_m2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.k1 <= 0.0 {
            return Err(Error::InvalidParameter("k1 must be positive".into()));
        }
        if self.k_m1 + self.k2 <= 0.0 {
            return Err(Error::InvalidParameter("k_m1 + k2 must be positive".into()));
        }
        Ok(())
    }

    pub fn is_irreversible(&self) -> bool {
        self.k_m2 == 0.0
    }

    /// Lower bound of the manifold denominator on nonnegative states.
    pub fn fast_margin(&self) -> f64 {
        self.k_m1 + self.k2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConstants {
    pub d_s: f64,
    pub d_e: f64,
    pub d_c: f64,
    #[serde(default)]
    pub d_p: f64,
}

impl DiffusionConstants {
    pub fn new(d_s: f64, d_e: f64, d_c: f64, d_p: f64) -> Result<Self> {
        let d = Self { d_s, d_e, d_c, d_p };
        d.validate()?;
        Ok(d)
    }

    pub fn zero() -> Self {
        Self { d_s: 0.0, d_e: 0.0, d_c: 0.0, d_p: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d_s", self.d_s), ("d_e", self.d_e), ("d_c", self.d_c), ("d_p", self.d_p)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `δ = d_c − d_e`, the coupling of complex diffusion into total enzyme.
    pub fn delta(&self) -> f64 {
        self.d_c - self.d_e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    FullScaledIrrev,
    FullScaledRev,
    ReducedIrrevSmallDelta,
    ReducedIrrevBigDelta,
    ReducedRevSmallDelta,
    ReducedRevBigDelta,
    SlowComplexFormation,
    HomogeneousFullIrrev,
    HomogeneousReducedIrrev,
    HomogeneousReducedRev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Species {
    S,
    CStar,
    YStar,
    P,
    E,
}

impl Species {
    pub fn name(&self) -> &'static str {
        match self {
            Species::S => "s",
            Species::CStar => "c_star",
            Species::YStar => "y_star",
            Species::P => "p",
            Species::E => "e",
        }
    }
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::FullScaledIrrev,
        ModelKind::FullScaledRev,
        ModelKind::ReducedIrrevSmallDelta,
        ModelKind::ReducedIrrevBigDelta,
        ModelKind::ReducedRevSmallDelta,
        ModelKind::ReducedRevBigDelta,
        ModelKind::SlowComplexFormation,
        ModelKind::HomogeneousFullIrrev,
        ModelKind::HomogeneousReducedIrrev,
        ModelKind::HomogeneousReducedRev,
    ];

    pub fn is_full(&self) -> bool {
        matches!(
            self,
            ModelKind::FullScaledIrrev | ModelKind::FullScaledRev | ModelKind::HomogeneousFullIrrev
        )
    }

    pub fn is_reduced(&self) -> bool {
        matches!(
            self,
            ModelKind::ReducedIrrevSmallDelta
                | ModelKind::ReducedIrrevBigDelta
                | ModelKind::ReducedRevSmallDelta
                | ModelKind::ReducedRevBigDelta
        )
    }

    pub fn is_irreversible(&self) -> bool {
        matches!(
            self,
            ModelKind::FullScaledIrrev
                | ModelKind::ReducedIrrevSmallDelta
                | ModelKind::ReducedIrrevBigDelta
                | ModelKind::HomogeneousFullIrrev
                | ModelKind::HomogeneousReducedIrrev
        )
    }

    pub fn is_reversible(&self) -> bool {
        matches!(
            self,
            ModelKind::FullScaledRev
                | ModelKind::ReducedRevSmallDelta
                | ModelKind::ReducedRevBigDelta
                | ModelKind::HomogeneousReducedRev
        )
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(
            self,
            ModelKind::HomogeneousFullIrrev
                | ModelKind::HomogeneousReducedIrrev
                | ModelKind::HomogeneousReducedRev
        )
    }

    /// Whether the `δ·D(manifold)` coupling is kept in the `y*` equation.
    pub fn keeps_delta_term(&self) -> bool {
        matches!(self, ModelKind::ReducedIrrevBigDelta | ModelKind::ReducedRevBigDelta)
    }

    /// Field layout of the spatial models; empty for homogeneous kinds.
    pub fn species(&self) -> &'static [Species] {
        use Species::*;
        match self {
            ModelKind::FullScaledIrrev => &[S, CStar, YStar],
            ModelKind::FullScaledRev => &[S, CStar, YStar, P],
            ModelKind::ReducedIrrevSmallDelta | ModelKind::ReducedIrrevBigDelta => &[S, YStar],
            ModelKind::ReducedRevSmallDelta | ModelKind::ReducedRevBigDelta => &[S, YStar, P],
            ModelKind::SlowComplexFormation => &[S, E, P],
            _ => &[],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::FullScaledIrrev => "full-scaled-irrev",
            ModelKind::FullScaledRev => "full-scaled-rev",
            ModelKind::ReducedIrrevSmallDelta => "reduced-irrev-small-delta",
            ModelKind::ReducedIrrevBigDelta => "reduced-irrev-big-delta",
            ModelKind::ReducedRevSmallDelta => "reduced-rev-small-delta",
            ModelKind::ReducedRevBigDelta => "reduced-rev-big-delta",
            ModelKind::SlowComplexFormation => "slow-complex-formation",
            ModelKind::HomogeneousFullIrrev => "homogeneous-full-irrev",
            ModelKind::HomogeneousReducedIrrev => "homogeneous-reduced-irrev",
            ModelKind::HomogeneousReducedRev => "homogeneous-reduced-rev",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub rates: RateConstants,
    pub diffusion: DiffusionConstants,
    pub epsilon: Option<f64>,
}

impl ModelSpec {
    pub fn new(
        kind: ModelKind,
        rates: RateConstants,
        diffusion: DiffusionConstants,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        let spec = Self { kind, rates, diffusion, epsilon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        self.diffusion.validate()?;
        match (self.kind.is_full(), self.epsilon) {
            (true, None) => {
                return Err(Error::InvalidParameter(format!("{} needs epsilon", self.kind)))
            }
            (true, Some(e)) if !(e > 0.0 && e.is_finite()) => {
                return Err(Error::InvalidParameter(format!("epsilon must be positive, got {e}")))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidParameter(format!(
                    "{} does not take epsilon",
                    self.kind
                )))
            }
            _ => {}
        }
        if self.kind.is_irreversible() && !self.rates.is_irreversible() {
            return Err(Error::InvalidParameter(format!(
                "{} requires k_m2 = 0, got {}",
                self.kind, self.rates.k_m2
            )));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> Result<f64> {
        match self.epsilon {
            Some(e) if e > 0.0 => Ok(e),
            Some(e) => Err(Error::InvalidParameter(format!("epsilon must be positive, got {e}"))),
            None => Err(Error::InvalidParameter(format!("{} needs epsilon", self.kind))),
        }
    }

    fn expect_kind(&self, allowed: &[ModelKind]) -> Result<()> {
        if allowed.contains(&self.kind) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "model kind {} not valid here (expected one of {:?})",
                self.kind, allowed
            )))
        }
    }
}

/// State of the full scaled systems; `p` is present for the reversible one.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub s: Field,
    pub c_star: Field,
    pub y_star: Field,
    pub p: Option<Field>,
}

/// State of the reduced systems; `c*` lives on the manifold and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub s: Field,
    pub y_star: Field,
    pub p: Option<Field>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlowComplexState {
    pub s: Field,
    pub e: Field,
    pub p: Field,
}

impl FullState {
    pub fn cells(&self) -> usize {
        self.s.len()
    }

    pub fn check(&self, n: usize) -> Result<()> {
        check_len(n, self.s.len())?;
        check_len(n, self.c_star.len())?;
        check_len(n, self.y_star.len())?;
        if let Some(p) = &self.p {
            check_len(n, p.len())?;
        }
        Ok(())
    }

    /// Checks the admissibility conditions of an initial state: all fields
    /// nonnegative and `y* ≥ c*` (free enzyme is nonnegative).
    pub fn check_admissible(&self) -> Result<()> {
        self.check(self.cells())?;
        let named = [("s", Some(&self.s)), ("c_star", Some(&self.c_star)), ("y_star", Some(&self.y_star)), ("p", self.p.as_ref())];
        for (name, f) in named {
            if let Some(f) = f {
                if let Some(i) = f.iter().position(|v| *v < 0.0) {
                    return Err(Error::Precondition(format!("{name} is negative in cell {i}")));
                }
            }
        }
        if let Some(i) = (0..self.cells()).find(|&i| self.y_star[i] < self.c_star[i]) {
            return Err(Error::Precondition(format!("y_star < c_star in cell {i}")));
        }
        Ok(())
    }

    pub fn to_blocked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * self.cells());
        v.extend_from_slice(&self.s);
        v.extend_from_slice(&self.c_star);
        v.extend_from_slice(&self.y_star);
        if let Some(p) = &self.p {
            v.extend_from_slice(p);
        }
        v
    }

    pub fn from_blocked(x: &[f64], n: usize, reversible: bool) -> Self {
        let f = |k: usize| Field::from_vec_unchecked(x[k * n..(k + 1) * n].to_vec());
        Self {
            s: f(0),
            c_star: f(1),
            y_star: f(2),
            p: reversible.then(|| f(3)),
        }
    }
}

impl ReducedState {
    pub fn cells(&self) -> usize {
        self.s.len()
    }

    pub fn check(&self, n: usize) -> Result<()> {
        check_len(n, self.s.len())?;
        check_len(n, self.y_star.len())?;
        if let Some(p) = &self.p {
            check_len(n, p.len())?;
        }
        Ok(())
    }

    pub fn to_blocked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.cells());
        v.extend_from_slice(&self.s);
        v.extend_from_slice(&self.y_star);
        if let Some(p) = &self.p {
            v.extend_from_slice(p);
        }
        v
    }

    pub fn from_blocked(x: &[f64], n: usize, reversible: bool) -> Self {
        let f = |k: usize| Field::from_vec_unchecked(x[k * n..(k + 1) * n].to_vec());
        Self {
            s: f(0),
            y_star: f(1),
            p: reversible.then(|| f(2)),
        }
    }
}

#[inline]
fn manifold_point(rates: &RateConstants, s: f64, y: f64, p: f64) -> f64 {
    let s = s.max(0.0);
    let p = p.max(0.0);
    let bind = rates.k1 * s + rates.k_m2 * p;
    bind * y / (bind + rates.k_m1 + rates.k2)
}

/// Net conversion rate `(k1 k2 s − k₋₁ k₋₂ p) y* / (k1 s + k₋₂ p + k₋₁ + k2)`.
#[inline]
fn reduced_rate(rates: &RateConstants, s: f64, y: f64, p: f64) -> f64 {
    let s = s.max(0.0);
    let p = p.max(0.0);
    let num = rates.k1 * rates.k2 * s - rates.k_m1 * rates.k_m2 * p;
    num * y / (rates.k1 * s + rates.k_m2 * p + rates.k_m1 + rates.k2)
}

/// Slow-manifold value of `c*` cellwise; `p = None` means irreversible.
///
/// Negative `s` or `p` (solver undershoot) are clamped to zero first.
pub fn slow_manifold_c(
    s: &Field,
    y_star: &Field,
    p: Option<&Field>,
    rates: &RateConstants,
) -> Result<Field> {
    check_len(s.len(), y_star.len())?;
    if let Some(p) = p {
        check_len(s.len(), p.len())?;
    }
    let out = (0..s.len())
        .map(|a| {
            let pa = p.map_or(0.0, |p| p[a]);
            let k_m2 = if p.is_some() { rates.k_m2 } else { 0.0 };
            let r = RateConstants { k_m2, ..*rates };
            manifold_point(&r, s[a], y_star[a], pa)
        })
        .collect();
    Ok(Field::from_vec_unchecked(out))
}

/// A spatial model bound to its discrete Laplacian. Evaluation works on the
/// species-blocked layout given by [`ModelKind::species`].
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    lap: DiscreteLaplacian,
}

impl Model {
    pub fn new(spec: ModelSpec, lap: DiscreteLaplacian) -> Result<Self> {
        spec.validate()?;
        if spec.kind.is_homogeneous() {
            return Err(Error::InvalidParameter(format!(
                "{} is not a spatial model",
                spec.kind
            )));
        }
        Ok(Self { spec, lap })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn laplacian(&self) -> &DiscreteLaplacian {
        &self.lap
    }

    pub fn cells(&self) -> usize {
        self.lap.size()
    }

    pub fn species(&self) -> &'static [Species] {
        self.spec.kind.species()
    }

    pub fn dim(&self) -> usize {
        self.species().len() * self.cells()
    }

    /// Evaluates the right-hand side on a blocked state vector.
    pub fn rhs_blocked(&self, x: &[f64], out: &mut [f64]) {
        let n = self.cells();
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        let rates = &self.spec.rates;
        let diff = &self.spec.diffusion;
        let lap = &self.lap;
        out.fill(0.0);
        match self.spec.kind {
            ModelKind::FullScaledIrrev | ModelKind::FullScaledRev => {
                let rev = self.spec.kind == ModelKind::FullScaledRev;
                let inv_eps = 1.0 / self.spec.epsilon.expect("validated");
                let (s, rest) = x.split_at(n);
                let (c, rest) = rest.split_at(n);
                let (y, p) = rest.split_at(n);
                let (ds, rest) = out.split_at_mut(n);
                let (dc, rest) = rest.split_at_mut(n);
                let (dy, dp) = rest.split_at_mut(n);
                let k_m2 = if rev { rates.k_m2 } else { 0.0 };
                for a in 0..n {
                    let pa = if rev { p[a] } else { 0.0 };
                    ds[a] = (rates.k1 * s[a] + rates.k_m1) * c[a] - rates.k1 * s[a] * y[a];
                    let mu = -(rates.k1 * s[a] + rates.k_m1 + rates.k2 + k_m2 * pa) * c[a]
                        + (rates.k1 * s[a] + k_m2 * pa) * y[a];
                    dc[a] = inv_eps * mu;
                    if rev {
                        dp[a] = (rates.k2 + k_m2 * pa) * c[a] - k_m2 * pa * y[a];
                    }
                }
                lap.add_scaled(diff.d_s, s, ds);
                lap.add_scaled(diff.d_c, c, dc);
                lap.add_scaled(diff.d_e, y, dy);
                lap.add_scaled(diff.delta(), c, dy);
                if rev {
                    lap.add_scaled(diff.d_p, p, dp);
                }
            }
            ModelKind::ReducedIrrevSmallDelta
            | ModelKind::ReducedIrrevBigDelta
            | ModelKind::ReducedRevSmallDelta
            | ModelKind::ReducedRevBigDelta => {
                let rev = self.spec.kind.is_reversible();
                let (s, rest) = x.split_at(n);
                let (y, p) = rest.split_at(n);
                let (ds, rest) = out.split_at_mut(n);
                let (dy, dp) = rest.split_at_mut(n);
                let r = if rev { *rates } else { RateConstants { k_m2: 0.0, ..*rates } };
                for a in 0..n {
                    let pa = if rev { p[a] } else { 0.0 };
                    let q = reduced_rate(&r, s[a], y[a], pa);
                    ds[a] = -q;
                    if rev {
                        dp[a] = q;
                    }
                }
                lap.add_scaled(diff.d_s, s, ds);
                lap.add_scaled(diff.d_e, y, dy);
                if self.spec.kind.keeps_delta_term() {
                    let m: Vec<f64> = (0..n)
                        .map(|a| manifold_point(&r, s[a], y[a], if rev { p[a] } else { 0.0 }))
                        .collect();
                    lap.add_scaled(diff.delta(), &m, dy);
                }
                if rev {
                    lap.add_scaled(diff.d_p, p, dp);
                }
            }
            ModelKind::SlowComplexFormation => {
                let (kappa_f, kappa_b) = slow_complex_constants(rates)
                    .expect("validated: k_m1 + k2 > 0");
                let (s, rest) = x.split_at(n);
                let (e, p) = rest.split_at(n);
                let (ds, rest) = out.split_at_mut(n);
                let (de, dp) = rest.split_at_mut(n);
                for a in 0..n {
                    let q = kappa_f * s[a] * e[a] - kappa_b * e[a] * p[a];
                    ds[a] = -q;
                    dp[a] = q;
                }
                lap.add_scaled(diff.d_s, s, ds);
                lap.add_scaled(diff.d_e, e, de);
                lap.add_scaled(diff.d_p, p, dp);
            }
            _ => unreachable!("homogeneous kinds are rejected in Model::new"),
        }
    }

    /// Cellwise reaction Jacobian of the full scaled systems in the
    /// species order `[s, c*, y*, p]`; `None` for other kinds.
    pub fn full_reaction_jacobian(&self, s: f64, c: f64, y: f64, p: f64) -> Option<[[f64; 4]; 4]> {
        let rev = match self.spec.kind {
            ModelKind::FullScaledIrrev => false,
            ModelKind::FullScaledRev => true,
            _ => return None,
        };
        let r = &self.spec.rates;
        let inv_eps = 1.0 / self.spec.epsilon?;
        let k_m2 = if rev { r.k_m2 } else { 0.0 };
        let mut j = [[0.0; 4]; 4];
        j[0][0] = r.k1 * c - r.k1 * y;
        j[0][1] = r.k1 * s + r.k_m1;
        j[0][2] = -r.k1 * s;
        j[1][0] = inv_eps * (r.k1 * y - r.k1 * c);
        j[1][1] = -inv_eps * (r.k1 * s + r.k_m1 + r.k2 + k_m2 * p);
        j[1][2] = inv_eps * (r.k1 * s + k_m2 * p);
        if rev {
            j[1][3] = inv_eps * k_m2 * (y - c);
            j[3][1] = r.k2 + k_m2 * p;
            j[3][2] = -k_m2 * p;
            j[3][3] = k_m2 * (c - y);
        }
        Some(j)
    }
}

fn tangent_full(state: &FullState, spec: &ModelSpec, lap: &DiscreteLaplacian) -> Result<FullState> {
    spec.epsilon()?;
    let n = lap.size();
    state.check(n)?;
    let rev = spec.kind == ModelKind::FullScaledRev;
    if rev != state.p.is_some() {
        return Err(Error::InvalidParameter(format!(
            "{} {} a p field",
            spec.kind,
            if rev { "needs" } else { "does not take" }
        )));
    }
    let model = Model::new(*spec, *lap)?;
    let x = state.to_blocked();
    let mut out = vec![0.0; x.len()];
    model.rhs_blocked(&x, &mut out);
    Ok(FullState::from_blocked(&out, n, rev))
}

/// `(ds/dτ, dc*/dτ, dy*/dτ)` of the scaled irreversible system.
pub fn rhs_full_scaled_irrev(
    state: &FullState,
    spec: &ModelSpec,
    lap: &DiscreteLaplacian,
) -> Result<FullState> {
    spec.expect_kind(&[ModelKind::FullScaledIrrev])?;
    tangent_full(state, spec, lap)
}

/// Tangent of the scaled reversible system, including `dp/dτ`.
pub fn rhs_full_scaled_rev(
    state: &FullState,
    spec: &ModelSpec,
    lap: &DiscreteLaplacian,
) -> Result<FullState> {
    spec.expect_kind(&[ModelKind::FullScaledRev])?;
    tangent_full(state, spec, lap)
}

fn tangent_reduced(
    state: &ReducedState,
    spec: &ModelSpec,
    lap: &DiscreteLaplacian,
) -> Result<ReducedState> {
    let n = lap.size();
    state.check(n)?;
    let rev = spec.kind.is_reversible();
    if rev != state.p.is_some() {
        return Err(Error::InvalidParameter(format!(
            "{} {} a p field",
            spec.kind,
            if rev { "needs" } else { "does not take" }
        )));
    }
    let model = Model::new(*spec, *lap)?;
    let x = state.to_blocked();
    let mut out = vec![0.0; x.len()];
    model.rhs_blocked(&x, &mut out);
    Ok(ReducedState::from_blocked(&out, n, rev))
}

/// Reduced irreversible system; the kind selects whether `δ·D(c*)` is kept.
pub fn rhs_reduced_irrev(
    state: &ReducedState,
    spec: &ModelSpec,
    lap: &DiscreteLaplacian,
) -> Result<ReducedState> {
    spec.expect_kind(&[ModelKind::ReducedIrrevSmallDelta, ModelKind::ReducedIrrevBigDelta])?;
    tangent_reduced(state, spec, lap)
}

pub fn rhs_reduced_rev(
    state: &ReducedState,
    spec: &ModelSpec,
    lap: &DiscreteLaplacian,
) -> Result<ReducedState> {
    spec.expect_kind(&[ModelKind::ReducedRevSmallDelta, ModelKind::ReducedRevBigDelta])?;
    tangent_reduced(state, spec, lap)
}

/// Effective forward and backward constants of the slow complex formation
/// limit, `k1 k2 / (k₋₁ + k2)` and `k₋₁ k₋₂ / (k₋₁ + k2)`.
pub fn slow_complex_constants(rates: &RateConstants) -> Result<(f64, f64)> {
    let den = rates.k_m1 + rates.k2;
    if !(den > 0.0) {
        return Err(Error::InvalidParameter("k_m1 + k2 must be positive".into()));
    }
    Ok((rates.k1 * rates.k2 / den, rates.k_m1 * rates.k_m2 / den))
}

pub fn rhs_slow_complex_formation(
    state: &SlowComplexState,
    rates: &RateConstants,
    diffusion: &DiffusionConstants,
    lap: &DiscreteLaplacian,
) -> Result<SlowComplexState> {
    slow_complex_constants(rates)?;
    let n = lap.size();
    check_len(n, state.s.len())?;
    check_len(n, state.e.len())?;
    check_len(n, state.p.len())?;
    let spec = ModelSpec::new(ModelKind::SlowComplexFormation, *rates, *diffusion, None)?;
    let model = Model::new(spec, *lap)?;
    let mut x = Vec::with_capacity(3 * n);
    x.extend_from_slice(&state.s);
    x.extend_from_slice(&state.e);
    x.extend_from_slice(&state.p);
    let mut out = vec![0.0; 3 * n];
    model.rhs_blocked(&x, &mut out);
    let f = |k: usize| Field::from_vec_unchecked(out[k * n..(k + 1) * n].to_vec());
    Ok(SlowComplexState { s: f(0), e: f(1), p: f(2) })
}

/// Parameters of the spatially homogeneous models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousParams {
    /// Scaled total enzyme `e0*`.
    pub e0_star: f64,
    /// Initial substrate, used by the reversible reduction (`p = s0 − s`).
    pub s0: f64,
    /// Only used by the full homogeneous system.
    pub epsilon: Option<f64>,
}

/// Homogeneous right-hand sides in slow time.
///
/// * `HomogeneousFullIrrev`: state `[s, c]` (unscaled complex),
///   `s' = −k1 s e0* + ε⁻¹(k1 s + k₋₁) c`, `c' = k1 s e0* − ε⁻¹(k1 s + k₋₁ + k2) c`.
/// * `HomogeneousReducedIrrev`: state `[s]`, `s' = −k1 k2 s e0* / (k1 s + k₋₁ + k2)`.
/// * `HomogeneousReducedRev`: state `[s]`,
///   `s' = −(k1 k2 s + k₋₁ k₋₂ (s − s0)) e0* / (k1 s + k₋₂ (s0 − s) + k₋₁ + k2)`.
pub fn rhs_homogeneous(
    kind: ModelKind,
    state: &[f64],
    params: &HomogeneousParams,
    rates: &RateConstants,
) -> Result<Vec<f64>> {
    rates.validate()?;
    let r = rates;
    match kind {
        ModelKind::HomogeneousFullIrrev => {
            check_len(2, state.len())?;
            let eps = match params.epsilon {
                Some(e) if e > 0.0 => e,
                _ => return Err(Error::InvalidParameter("epsilon must be positive".into())),
            };
            let (s, c) = (state[0], state[1]);
            Ok(vec![
                -r.k1 * s * params.e0_star + (r.k1 * s + r.k_m1) * c / eps,
                r.k1 * s * params.e0_star - (r.k1 * s + r.k_m1 + r.k2) * c / eps,
            ])
        }
        ModelKind::HomogeneousReducedIrrev => {
            check_len(1, state.len())?;
            let s = state[0];
            Ok(vec![-r.k1 * r.k2 * s * params.e0_star / (r.k1 * s + r.k_m1 + r.k2)])
        }
        ModelKind::HomogeneousReducedRev => {
            check_len(1, state.len())?;
            let s = state[0];
            let s0 = params.s0;
            let num = (r.k1 * r.k2 * s + r.k_m1 * r.k_m2 * (s - s0)) * params.e0_star;
            let den = r.k1 * s + r.k_m2 * (s0 - s) + r.k_m1 + r.k2;
            Ok(vec![-num / den])
        }
        other => Err(Error::InvalidParameter(format!("{other} is not a homogeneous model"))),
    }
}

/// Projects a raw full state onto the slow manifold: `s`, `y*` (and `p`) are
/// first integrals of the fast subsystem and are kept; `c*` is replaced by
/// its manifold value.
pub fn project_initial_values(raw: &FullState, rates: &RateConstants) -> Result<(ReducedState, Field)> {
    raw.check(raw.cells())?;
    let c = slow_manifold_c(&raw.s, &raw.y_star, raw.p.as_ref(), rates)?;
    Ok((
        ReducedState {
            s: raw.s.clone(),
            y_star: raw.y_star.clone(),
            p: raw.p.clone(),
        },
        c,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_laplacian, Grid1D};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lap(n: usize) -> DiscreteLaplacian {
        build_laplacian(Grid1D::new(1.0, n).unwrap())
    }

    fn f(v: &[f64]) -> Field {
        Field::new(v.to_vec()).unwrap()
    }

    fn ones_irrev() -> RateConstants {
        RateConstants::irreversible(1.0, 1.0, 1.0).unwrap()
    }

    fn reference_diffusion() -> DiffusionConstants {
        DiffusionConstants::new(1.0, 1.0, 2.0, 1.0).unwrap()
    }

    fn full_irrev(eps: f64) -> ModelSpec {
        ModelSpec::new(ModelKind::FullScaledIrrev, ones_irrev(), reference_diffusion(), Some(eps)).unwrap()
    }

    #[test]
    fn rate_validation() {
        assert!(RateConstants::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(RateConstants::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(RateConstants::new(1.0, -1.0, 3.0, 0.0).is_err());
        assert!(RateConstants::new(1.0, 0.0, 1.0, 0.0).unwrap().is_irreversible());
        assert!(DiffusionConstants::new(1.0, -0.1, 0.0, 0.0).is_err());
        assert_eq!(reference_diffusion().delta(), 1.0);
    }

    #[test]
    fn spec_validation() {
        let d = reference_diffusion();
        assert!(ModelSpec::new(ModelKind::FullScaledIrrev, ones_irrev(), d, None).is_err());
        assert!(ModelSpec::new(ModelKind::FullScaledIrrev, ones_irrev(), d, Some(0.0)).is_err());
        assert!(ModelSpec::new(ModelKind::FullScaledIrrev, ones_irrev(), d, Some(-1.0)).is_err());
        assert!(ModelSpec::new(ModelKind::ReducedIrrevBigDelta, ones_irrev(), d, Some(0.1)).is_err());
        assert!(ModelSpec::new(ModelKind::FullScaledIrrev, RateConstants::unit(), d, Some(0.1)).is_err());
        assert!(ModelSpec::new(ModelKind::FullScaledRev, ones_irrev(), d, Some(0.1)).is_ok());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("bogus".parse::<ModelKind>().is_err());
    }

    #[test]
    fn full_irrev_on_manifold_point() {
        let state = FullState { s: f(&[1.0]), c_star: f(&[1.0 / 3.0]), y_star: f(&[1.0]), p: None };
        for eps in [1.0, 1e-2, 1e-4] {
            let t = rhs_full_scaled_irrev(&state, &full_irrev(eps), &lap(1)).unwrap();
            assert_relative_eq!(t.s[0], -1.0 / 3.0, epsilon = 1e-15);
            assert!(t.c_star[0].abs() <= 1e-15 / eps);
            assert_eq!(t.y_star[0], 0.0);
        }
    }

    #[test]
    fn full_irrev_substitution() {
        let state = FullState { s: f(&[1.0]), c_star: f(&[0.0]), y_star: f(&[1.0]), p: None };
        let t = rhs_full_scaled_irrev(&state, &full_irrev(0.1), &lap(1)).unwrap();
        assert_eq!(t.s[0], -1.0);
        assert_relative_eq!(t.c_star[0], 10.0, epsilon = 1e-14);
        assert_eq!(t.y_star[0], 0.0);
    }

    #[test]
    fn full_irrev_constant_fields_match_single_cell() {
        let one = FullState { s: f(&[1.0]), c_star: f(&[0.2]), y_star: f(&[0.9]), p: None };
        let two = FullState { s: f(&[1.0; 2]), c_star: f(&[0.2; 2]), y_star: f(&[0.9; 2]), p: None };
        let a = rhs_full_scaled_irrev(&one, &full_irrev(0.01), &lap(1)).unwrap();
        let b = rhs_full_scaled_irrev(&two, &full_irrev(0.01), &lap(2)).unwrap();
        for k in 0..2 {
            assert_eq!(b.s[k], a.s[0]);
            assert_eq!(b.c_star[k], a.c_star[0]);
            assert_eq!(b.y_star[k], 0.0);
        }
    }

    #[test]
    fn full_irrev_errors() {
        let state = FullState { s: f(&[1.0]), c_star: f(&[0.0, 1.0]), y_star: f(&[1.0]), p: None };
        assert!(matches!(
            rhs_full_scaled_irrev(&state, &full_irrev(0.1), &lap(1)),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut spec = full_irrev(0.1);
        spec.epsilon = Some(0.0);
        let ok = FullState { s: f(&[1.0]), c_star: f(&[0.0]), y_star: f(&[1.0]), p: None };
        assert!(rhs_full_scaled_irrev(&ok, &spec, &lap(1)).is_err());
    }

    #[test]
    fn full_rev_examples() {
        let spec = ModelSpec::new(ModelKind::FullScaledRev, RateConstants::unit(), reference_diffusion(), Some(1.0)).unwrap();
        let on = FullState { s: f(&[1.0]), c_star: f(&[0.5]), y_star: f(&[1.0]), p: Some(f(&[1.0])) };
        let t = rhs_full_scaled_rev(&on, &spec, &lap(1)).unwrap();
        assert_eq!(t.c_star[0], 0.0);

        let sub = FullState { s: f(&[1.0]), c_star: f(&[0.0]), y_star: f(&[1.0]), p: Some(f(&[0.0])) };
        let t = rhs_full_scaled_rev(&sub, &spec, &lap(1)).unwrap();
        assert_eq!((t.s[0], t.c_star[0], t.y_star[0], t.p.unwrap()[0]), (-1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn rev_with_zero_backward_rate_specializes_to_irrev() {
        let n = 6;
        let state = FullState {
            s: f(&[0.3, 1.2, 0.8, 0.0, 2.0, 1.1]),
            c_star: f(&[0.1, 0.4, 0.2, 0.0, 0.5, 0.3]),
            y_star: f(&[0.9, 1.0, 1.1, 0.7, 0.8, 1.3]),
            p: Some(f(&[0.5, 0.2, 0.0, 1.0, 0.4, 0.7])),
        };
        let rev = ModelSpec::new(ModelKind::FullScaledRev, ones_irrev(), reference_diffusion(), Some(0.01)).unwrap();
        let t_rev = rhs_full_scaled_rev(&state, &rev, &lap(n)).unwrap();
        let irrev_state = FullState { p: None, ..state.clone() };
        let t_irrev = rhs_full_scaled_irrev(&irrev_state, &full_irrev(0.01), &lap(n)).unwrap();
        assert_eq!(t_rev.s, t_irrev.s);
        assert_eq!(t_rev.c_star, t_irrev.c_star);
        assert_eq!(t_rev.y_star, t_irrev.y_star);
        // p decouples: only diffusion plus production k2 c*
        let p = state.p.as_ref().unwrap();
        let dp = lap(n).apply(p).unwrap();
        for a in 0..n {
            assert_relative_eq!(t_rev.p.as_ref().unwrap()[a], dp[a] + state.c_star[a], epsilon = 1e-12);
        }
    }

    #[test]
    fn manifold_examples() {
        let r = ones_irrev();
        assert_relative_eq!(slow_manifold_c(&f(&[1.0]), &f(&[1.0]), None, &r).unwrap()[0], 1.0 / 3.0);
        assert_eq!(slow_manifold_c(&f(&[0.0]), &f(&[3.7]), None, &r).unwrap()[0], 0.0);
        let v = slow_manifold_c(&f(&[1.0]), &f(&[1.0]), Some(&f(&[1.0])), &RateConstants::unit()).unwrap();
        assert_eq!(v[0], 0.5);
        assert!(slow_manifold_c(&f(&[1.0, 2.0]), &f(&[1.0]), None, &r).is_err());
    }

    #[test]
    fn reduced_irrev_examples() {
        for kind in [ModelKind::ReducedIrrevSmallDelta, ModelKind::ReducedIrrevBigDelta] {
            let spec = ModelSpec::new(kind, ones_irrev(), reference_diffusion(), None).unwrap();
            let st = ReducedState { s: f(&[1.0]), y_star: f(&[1.0]), p: None };
            let t = rhs_reduced_irrev(&st, &spec, &lap(1)).unwrap();
            assert_relative_eq!(t.s[0], -1.0 / 3.0, epsilon = 1e-15);
            assert_eq!(t.y_star[0], 0.0);

            let st = ReducedState { s: f(&[0.7; 5]), y_star: f(&[1.3; 5]), p: None };
            let t = rhs_reduced_irrev(&st, &spec, &lap(5)).unwrap();
            let q = 0.7 * 1.3 / (0.7 + 2.0);
            for a in 0..5 {
                assert_relative_eq!(t.s[a], -q, epsilon = 1e-15);
                assert_eq!(t.y_star[a], 0.0);
            }
        }
    }

    #[test]
    fn small_delta_drops_manifold_diffusion() {
        let st = ReducedState { s: f(&[0.2, 1.5, 0.9]), y_star: f(&[1.0, 1.0, 1.0]), p: None };
        let small = ModelSpec::new(ModelKind::ReducedIrrevSmallDelta, ones_irrev(), reference_diffusion(), None).unwrap();
        let big = ModelSpec { kind: ModelKind::ReducedIrrevBigDelta, ..small };
        let a = rhs_reduced_irrev(&st, &small, &lap(3)).unwrap();
        let b = rhs_reduced_irrev(&st, &big, &lap(3)).unwrap();
        assert_eq!(a.s, b.s);
        assert!(a.y_star.iter().all(|v| *v == 0.0));
        let m = slow_manifold_c(&st.s, &st.y_star, None, &ones_irrev()).unwrap();
        let dm = lap(3).apply(&m).unwrap();
        for k in 0..3 {
            assert_relative_eq!(b.y_star[k], dm[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn reduced_rev_examples() {
        let spec = ModelSpec::new(ModelKind::ReducedRevBigDelta, RateConstants::unit(), reference_diffusion(), None).unwrap();
        let st = ReducedState { s: f(&[1.0]), y_star: f(&[1.0]), p: Some(f(&[1.0])) };
        let t = rhs_reduced_rev(&st, &spec, &lap(1)).unwrap();
        assert_eq!((t.s[0], t.y_star[0], t.p.unwrap()[0]), (0.0, 0.0, 0.0));

        let st = ReducedState { s: f(&[1.0]), y_star: f(&[1.0]), p: Some(f(&[0.0])) };
        let t = rhs_reduced_rev(&st, &spec, &lap(1)).unwrap();
        assert_relative_eq!(t.s[0], -1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(t.p.unwrap()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert!(rhs_reduced_irrev(&st, &spec, &lap(1)).is_err());
    }

    #[test]
    fn reduced_rev_specializes_to_irrev() {
        let s = f(&[0.3, 1.2, 0.8, 0.0]);
        let y = f(&[0.9, 1.0, 1.1, 0.7]);
        let p = f(&[0.5, 0.2, 0.0, 1.0]);
        for (kr, ki) in [
            (ModelKind::ReducedRevSmallDelta, ModelKind::ReducedIrrevSmallDelta),
            (ModelKind::ReducedRevBigDelta, ModelKind::ReducedIrrevBigDelta),
        ] {
            let rev = ModelSpec::new(kr, ones_irrev(), reference_diffusion(), None).unwrap();
            let irr = ModelSpec::new(ki, ones_irrev(), reference_diffusion(), None).unwrap();
            let a = rhs_reduced_rev(&ReducedState { s: s.clone(), y_star: y.clone(), p: Some(p.clone()) }, &rev, &lap(4)).unwrap();
            let b = rhs_reduced_irrev(&ReducedState { s: s.clone(), y_star: y.clone(), p: None }, &irr, &lap(4)).unwrap();
            for k in 0..4 {
                assert!((a.s[k] - b.s[k]).abs() <= 1e-15 * (1.0 + b.s[k].abs()));
                assert!((a.y_star[k] - b.y_star[k]).abs() <= 1e-15 * (1.0 + b.y_star[k].abs()));
            }
        }
    }

    #[test]
    fn slow_complex_examples() {
        let r = RateConstants::unit();
        assert_eq!(slow_complex_constants(&r).unwrap(), (0.5, 0.5));
        let d = reference_diffusion();
        let st = SlowComplexState { s: f(&[1.0; 3]), e: f(&[1.0; 3]), p: f(&[1.0; 3]) };
        let t = rhs_slow_complex_formation(&st, &r, &d, &lap(3)).unwrap();
        assert!(t.s.iter().all(|v| *v == 0.0));

        let st = SlowComplexState { s: f(&[0.1, 0.9, 0.4]), e: f(&[0.0; 3]), p: f(&[0.3, 0.0, 2.0]) };
        let t = rhs_slow_complex_formation(&st, &r, &d, &lap(3)).unwrap();
        let ds = lap(3).apply(&st.s).unwrap();
        assert_eq!(t.s, ds);

        let st = SlowComplexState { s: f(&[2.0]), e: f(&[1.0]), p: f(&[0.0]) };
        let t = rhs_slow_complex_formation(&st, &r, &d, &lap(1)).unwrap();
        assert_eq!((t.s[0], t.e[0], t.p[0]), (-1.0, 0.0, 1.0));
    }

    #[test]
    fn homogeneous_examples() {
        let r = RateConstants::unit();
        let params = HomogeneousParams { e0_star: 1.0, s0: 1.0, epsilon: None };
        let v = rhs_homogeneous(ModelKind::HomogeneousReducedIrrev, &[1.0], &params, &ones_irrev()).unwrap();
        assert_relative_eq!(v[0], -1.0 / 3.0);

        let p2 = HomogeneousParams { e0_star: 0.7, s0: 1.3, epsilon: None };
        let r2 = RateConstants::new(2.0, 0.5, 1.5, 0.8).unwrap();
        let v = rhs_homogeneous(ModelKind::HomogeneousReducedRev, &[1.3], &p2, &r2).unwrap();
        let expect = -2.0 * 1.5 * 1.3 * 0.7 / (2.0 * 1.3 + 0.5 + 1.5);
        assert_relative_eq!(v[0], expect, epsilon = 1e-15);

        // equilibrium k1 k2 s = k-1 k-2 (s0 - s) at s = 1/2 for unit rates
        let v = rhs_homogeneous(ModelKind::HomogeneousReducedRev, &[0.5], &params, &r).unwrap();
        assert_eq!(v[0], 0.0);

        let full = HomogeneousParams { epsilon: Some(0.5), ..params };
        let v = rhs_homogeneous(ModelKind::HomogeneousFullIrrev, &[1.0, 0.25], &full, &ones_irrev()).unwrap();
        assert_relative_eq!(v[0], -1.0 + 2.0 * 0.25 / 0.5);
        assert_relative_eq!(v[1], 1.0 - 3.0 * 0.25 / 0.5);
        assert!(rhs_homogeneous(ModelKind::HomogeneousFullIrrev, &[1.0, 0.25], &params, &ones_irrev()).is_err());
        assert!(rhs_homogeneous(ModelKind::FullScaledIrrev, &[1.0], &params, &ones_irrev()).is_err());
    }

    #[test]
    fn projection_examples() {
        let r = ones_irrev();
        let raw = FullState { s: f(&[1.0]), c_star: f(&[0.9]), y_star: f(&[1.0]), p: None };
        let (red, c) = project_initial_values(&raw, &r).unwrap();
        assert_eq!(red.s, raw.s);
        assert_eq!(red.y_star, raw.y_star);
        assert_relative_eq!(c[0], 1.0 / 3.0);

        let on = FullState { c_star: c.clone(), ..raw.clone() };
        let (_, c2) = project_initial_values(&on, &r).unwrap();
        assert_eq!(c2, on.c_star);

        let rev = FullState { s: f(&[1.0]), c_star: f(&[0.0]), y_star: f(&[1.0]), p: Some(f(&[1.0])) };
        let (red, c) = project_initial_values(&rev, &RateConstants::unit()).unwrap();
        assert_eq!(red.p, rev.p);
        assert_eq!(c[0], 0.5);
    }

    #[test]
    fn full_jacobian_matches_finite_differences() {
        let spec = ModelSpec::new(ModelKind::FullScaledRev, RateConstants::new(1.3, 0.7, 0.4, 0.9).unwrap(), DiffusionConstants::zero(), Some(0.05)).unwrap();
        let model = Model::new(spec, lap(1)).unwrap();
        let x = [0.8, 0.2, 1.1, 0.6];
        let j = model.full_reaction_jacobian(x[0], x[1], x[2], x[3]).unwrap();
        let mut f0 = [0.0; 4];
        model.rhs_blocked(&x, &mut f0);
        for col in 0..4 {
            let h = 1e-7;
            let mut xp = x;
            xp[col] += h;
            let mut xm = x;
            xm[col] -= h;
            let mut fp = [0.0; 4];
            let mut fm = [0.0; 4];
            model.rhs_blocked(&xp, &mut fp);
            model.rhs_blocked(&xm, &mut fm);
            for row in 0..4 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!((fd - j[row][col]).abs() < 1e-6 * (1.0 + fd.abs()), "({row},{col})");
            }
        }
    }

    proptest! {
        #[test]
        fn manifold_confined_between_zero_and_total_enzyme(
            s in 0.0..10.0f64, y in 0.0..10.0f64, p in 0.0..10.0f64,
            k1 in 0.01..5.0f64, km1 in 0.0..5.0f64, k2 in 0.01..5.0f64, km2 in 0.0..5.0f64,
        ) {
            let r = RateConstants::new(k1, km1, k2, km2).unwrap();
            let c = slow_manifold_c(&f(&[s]), &f(&[y]), Some(&f(&[p])), &r).unwrap()[0];
            prop_assert!(c >= 0.0 && c <= y);
            let c = slow_manifold_c(&f(&[s]), &f(&[y]), None, &r).unwrap()[0];
            prop_assert!(c >= 0.0 && c <= y);
        }

        #[test]
        fn detailed_balance_zero_of_reduced_rate(
            s in 0.01..10.0f64, y in 0.0..5.0f64,
            k1 in 0.1..5.0f64, km1 in 0.1..5.0f64, k2 in 0.1..5.0f64, km2 in 0.1..5.0f64,
        ) {
            let r = RateConstants::new(k1, km1, k2, km2).unwrap();
            let p = k1 * k2 * s / (km1 * km2);
            let q = reduced_rate(&r, s, y, p);
            let scale = k1 * k2 * s * y / (k1 * s + km1 + k2);
            prop_assert!(q.abs() <= 1e-14 * (1.0 + scale));
        }
    }
}
