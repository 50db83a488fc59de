//! Method-of-lines glue: exposes a [`Model`] to the integrator.
//!
//! The integrator sees the state interleaved cell by cell (`[s₁, c₁, y₁, s₂,
//! …]`) so that the Jacobian is banded; the models evaluate on the
//! species-blocked layout.

use crate::banded::BandMatrix;
use crate::error::{check_len, Result};
use crate::integrator::{fd_band_jacobian, OdeSystem};
use crate::models::{rhs_homogeneous, HomogeneousParams, Model, ModelKind, RateConstants};

pub struct MolSystem {
    model: Model,
}

impl MolSystem {
    pub fn new(model: Model) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    fn m(&self) -> usize {
        self.model.species().len()
    }

    pub fn interleave(&self, blocked: &[f64]) -> Result<Vec<f64>> {
        check_len(self.model.dim(), blocked.len())?;
        Ok(interleave(blocked, self.m(), self.model.cells()))
    }

    pub fn deinterleave(&self, inter: &[f64]) -> Result<Vec<f64>> {
        check_len(self.model.dim(), inter.len())?;
        Ok(deinterleave(inter, self.m(), self.model.cells()))
    }
}

pub fn interleave(blocked: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for k in 0..m {
        for a in 0..n {
            out[a * m + k] = blocked[k * n + a];
        }
    }
    out
}

pub fn deinterleave(inter: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for k in 0..m {
        for a in 0..n {
            out[k * n + a] = inter[a * m + k];
        }
    }
    out
}

impl OdeSystem for MolSystem {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn bandwidth(&self) -> (usize, usize) {
        let m = self.m();
        let kind = self.model.spec().kind;
        if kind.keeps_delta_term() {
            // D(manifold(s, y*, p)) couples every species of the neighbors
            (2 * m - 1, 2 * m - 1)
        } else if kind.is_full() {
            // δ·D c* reaches the neighbors' c* from the y* rows
            (m + 1, m + 1)
        } else {
            (m, m)
        }
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let m = self.m();
        let n = self.model.cells();
        let x = deinterleave(y, m, n);
        let mut out = vec![0.0; x.len()];
        self.model.rhs_blocked(&x, &mut out);
        for k in 0..m {
            for a in 0..n {
                dy[a * m + k] = out[k * n + a];
            }
        }
    }

    fn jacobian(&self, t: f64, y: &[f64], f0: &[f64], jac: &mut BandMatrix) {
        let kind = self.model.spec().kind;
        if !matches!(kind, ModelKind::FullScaledIrrev | ModelKind::FullScaledRev) {
            fd_band_jacobian(self, t, y, f0, jac);
            return;
        }
        let m = self.m();
        let n = self.model.cells();
        let lap = self.model.laplacian();
        let diff = self.model.spec().diffusion;
        jac.fill(0.0);
        for a in 0..n {
            let base = a * m;
            let p = if m == 4 { y[base + 3] } else { 0.0 };
            let local = self
                .model
                .full_reaction_jacobian(y[base], y[base + 1], y[base + 2], p)
                .expect("full kinds have an analytic reaction jacobian");
            for (r, row) in local.iter().enumerate().take(m) {
                for (c, v) in row.iter().enumerate().take(m) {
                    if *v != 0.0 {
                        jac.add(base + r, base + c, *v);
                    }
                }
            }
        }
        // species order s, c*, y*, p; y* also diffuses with δ·D c*
        let coeffs: [(usize, usize, f64); 5] = [
            (0, 0, diff.d_s),
            (1, 1, diff.d_c),
            (2, 2, diff.d_e),
            (2, 1, diff.delta()),
            (3, 3, diff.d_p),
        ];
        for (row_sp, col_sp, coef) in coeffs {
            if row_sp >= m || coef == 0.0 {
                continue;
            }
            for a in 0..n {
                jac.add(a * m + row_sp, a * m + col_sp, coef * lap.diagonal(a));
                if a + 1 < n {
                    let w = coef * lap.off_diagonal();
                    jac.add(a * m + row_sp, (a + 1) * m + col_sp, w);
                    jac.add((a + 1) * m + row_sp, a * m + col_sp, w);
                }
            }
        }
    }
}

/// Spatially homogeneous models as integrator systems.
pub struct HomogeneousSystem {
    pub kind: ModelKind,
    pub params: HomogeneousParams,
    pub rates: RateConstants,
}

impl OdeSystem for HomogeneousSystem {
    fn dim(&self) -> usize {
        if self.kind == ModelKind::HomogeneousFullIrrev {
            2
        } else {
            1
        }
    }

    fn bandwidth(&self) -> (usize, usize) {
        (1, 1)
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        match rhs_homogeneous(self.kind, y, &self.params, &self.rates) {
            Ok(v) => dy.copy_from_slice(&v),
            Err(_) => dy.fill(f64::NAN),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_laplacian, Grid1D};
    use crate::models::{DiffusionConstants, ModelSpec};

    fn system(kind: ModelKind, n: usize) -> MolSystem {
        let rates = if kind.is_irreversible() {
            RateConstants::new(1.2, 0.8, 0.6, 0.0).unwrap()
        } else {
            RateConstants::new(1.2, 0.8, 0.6, 0.4).unwrap()
        };
        let eps = kind.is_full().then_some(0.05);
        let spec = ModelSpec::new(kind, rates, DiffusionConstants::new(1.0, 0.7, 2.0, 0.5).unwrap(), eps).unwrap();
        MolSystem::new(Model::new(spec, build_laplacian(Grid1D::new(1.0, n).unwrap())).unwrap())
    }

    fn sample_state(dim: usize) -> Vec<f64> {
        (0..dim).map(|i| 0.3 + 0.5 * ((i * 7 % 11) as f64) / 11.0).collect()
    }

    #[test]
    fn layout_round_trip() {
        let sys = system(ModelKind::FullScaledRev, 5);
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let back = sys.deinterleave(&sys.interleave(&x).unwrap()).unwrap();
        assert_eq!(back, x);
        assert_eq!(sys.interleave(&x).unwrap()[..4], [0.0, 5.0, 10.0, 15.0]);
    }

    #[test]
    fn analytic_jacobian_matches_dense_differences() {
        for kind in [ModelKind::FullScaledIrrev, ModelKind::FullScaledRev] {
            let sys = system(kind, 6);
            let y = sample_state(sys.dim());
            let mut f0 = vec![0.0; y.len()];
            sys.rhs(0.0, &y, &mut f0);
            let (kl, ku) = sys.bandwidth();
            let mut jac = BandMatrix::zeros(y.len(), kl, ku);
            sys.jacobian(0.0, &y, &f0, &mut jac);
            for j in 0..y.len() {
                let h = 1e-6;
                let mut yp = y.clone();
                yp[j] += h;
                let mut ym = y.clone();
                ym[j] -= h;
                let mut fp = vec![0.0; y.len()];
                let mut fm = vec![0.0; y.len()];
                sys.rhs(0.0, &yp, &mut fp);
                sys.rhs(0.0, &ym, &mut fm);
                for i in 0..y.len() {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    let an = jac.get(i, j);
                    assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "{kind} ({i},{j}): {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn declared_bandwidth_covers_the_coupling() {
        for kind in [
            ModelKind::FullScaledIrrev,
            ModelKind::FullScaledRev,
            ModelKind::ReducedIrrevSmallDelta,
            ModelKind::ReducedIrrevBigDelta,
            ModelKind::ReducedRevBigDelta,
            ModelKind::ReducedRevSmallDelta,
            ModelKind::SlowComplexFormation,
        ] {
            let sys = system(kind, 7);
            let n = sys.dim();
            let (kl, ku) = sys.bandwidth();
            let y = sample_state(n);
            let mut f0 = vec![0.0; n];
            sys.rhs(0.0, &y, &mut f0);
            for j in 0..n {
                let mut yp = y.clone();
                yp[j] += 1e-3;
                let mut fp = vec![0.0; n];
                sys.rhs(0.0, &yp, &mut fp);
                for i in 0..n {
                    if fp[i] != f0[i] {
                        assert!(j + kl >= i && j <= i + ku, "{kind}: ({i},{j}) outside band");
                    }
                }
            }
        }
    }
}
