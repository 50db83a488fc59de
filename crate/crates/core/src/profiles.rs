//! Initial profiles: a substrate step, a cosine complex profile and a
//! cosine-plus-Gaussian total enzyme profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};
use crate::models::FullState;

/// Parameters of the initial profile family. Positions and widths are given
/// as fractions of the domain length `L`.
///
/// * `s = s_lo` left of `step_position`, `s_hi` from there on
/// * `c* = c_amp (1 + cos(2πx/L)) / 2 + c_base`
/// * `y* = y_amp (1 + cos(2πx/L)) / 2 + bump_amp exp(−(x − x_b)² / 2σ²) + y_offset`
/// * `p = p_value` (reversible runs only)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditionSpec {
    pub s_lo: f64,
    pub s_hi: f64,
    pub step_position: f64,
    pub c_amp: f64,
    pub c_base: f64,
    pub y_amp: f64,
    pub y_offset: f64,
    pub bump_amp: f64,
    pub bump_center: f64,
    pub bump_width: f64,
    pub p_value: f64,
}

impl Default for InitialConditionSpec {
    fn default() -> Self {
        Self {
            s_lo: 0.5,
            s_hi: 1.5,
            step_position: 0.5,
            c_amp: 0.5,
            c_base: 0.1,
            y_amp: 0.5,
            y_offset: 0.5,
            bump_amp: 0.5,
            bump_center: 0.7,
            bump_width: 0.05,
            p_value: 0.0,
        }
    }
}

impl InitialConditionSpec {
    /// Spatially constant fields.
    pub fn constant(s: f64, c_star: f64, y_star: f64, p: f64) -> Self {
        Self {
            s_lo: s,
            s_hi: s,
            step_position: 0.5,
            c_amp: 0.0,
            c_base: c_star,
            y_amp: 0.0,
            y_offset: y_star,
            bump_amp: 0.0,
            bump_center: 0.5,
            bump_width: 0.05,
            p_value: p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("s_lo", self.s_lo),
            ("s_hi", self.s_hi),
            ("step_position", self.step_position),
            ("c_amp", self.c_amp),
            ("c_base", self.c_base),
            ("y_amp", self.y_amp),
            ("y_offset", self.y_offset),
            ("bump_amp", self.bump_amp),
            ("bump_center", self.bump_center),
            ("bump_width", self.bump_width),
            ("p_value", self.p_value),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::Config(format!("initial.{name} must be finite")));
            }
        }
        for (name, v) in [("s_lo", self.s_lo), ("s_hi", self.s_hi), ("p_value", self.p_value)] {
            if v < 0.0 {
                return Err(Error::Config(format!("initial.{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.step_position) {
            return Err(Error::Config("initial.step_position must lie in [0, 1]".into()));
        }
        if !(self.bump_width > 0.0) {
            return Err(Error::Config("initial.bump_width must be positive".into()));
        }
        Ok(())
    }
}

pub fn build_initial_profiles(
    spec: &InitialConditionSpec,
    grid: &Grid1D,
    reversible: bool,
) -> Result<FullState> {
    spec.validate()?;
    let length = grid.length();
    let x_step = spec.step_position * length;
    let x_b = spec.bump_center * length;
    let sigma = spec.bump_width * length;
    let n = grid.cell_count();
    let mut s = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for x in grid.centers() {
        let wave = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * x / length).cos());
        s.push(if x >= x_step { spec.s_hi } else { spec.s_lo });
        c.push(spec.c_amp * wave + spec.c_base);
        let bump = spec.bump_amp * (-(x - x_b).powi(2) / (2.0 * sigma * sigma)).exp();
        y.push(spec.y_amp * wave + bump + spec.y_offset);
    }
    if let Some(i) = c.iter().position(|v| *v < 0.0) {
        return Err(Error::Config(format!("initial c_star is negative in cell {i}")));
    }
    if let Some(i) = (0..n).find(|&i| y[i] < c[i]) {
        return Err(Error::Config(format!(
            "initial y_star < c_star in cell {i} (free enzyme would be negative)"
        )));
    }
    Ok(FullState {
        s: Field::new(s)?,
        c_star: Field::new(c)?,
        y_star: Field::new(y)?,
        p: reversible.then(|| Field::constant(n, spec.p_value)),
    })
}
