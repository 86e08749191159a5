//! Potentials V(t, x) with analytic gradients and Hessians, the test catalog,
//! and the uniformly-local Sobolev diagnostics used to screen them.

mod assumption;
mod sobolev;

pub use assumption::{verify_assumption_a, AssumptionReport, FailingWindow};
pub use sobolev::{
    local_sobolev_norm, sobolev_refinement, GriddedFunction, SobolevWindowReport, WindowNorm,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

/// Position or momentum; entries beyond the potential's dimension are zero.
pub type Vector = [f64; MAX_DIM];
/// Symmetric d×d block padded to `MAX_DIM`.
pub type Matrix = [[f64; MAX_DIM]; MAX_DIM];

/// Value, gradient and Hessian of V at one space-time point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LocalExpansion {
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessTag {
    SmoothQuadraticGrowth,
    #[serde(rename = "assumption_A_nonsmooth")]
    AssumptionANonsmooth,
    #[serde(rename = "violates_A")]
    ViolatesA,
}

pub trait Potential: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;

    /// All derivatives needed by the flow at once; `x` has `dimension()` entries.
    fn local(&self, t: f64, x: &[f64]) -> LocalExpansion;

    /// Sorted jump times of the t-dependence lying strictly inside (a, b).
    fn time_discontinuities(&self, a: f64, b: f64) -> Vec<f64>;

    fn smoothness(&self) -> SmoothnessTag;

    /// True when V does not depend on t. Kernel tables are cached by step
    /// length for such potentials.
    fn is_autonomous(&self) -> bool;

    /// Stable textual identity including parameters, used for cache keys and
    /// artifact metadata.
    fn label(&self) -> String;

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.local(t, x).value
    }

    fn gradient(&self, t: f64, x: &[f64]) -> Vector {
        self.local(t, x).gradient
    }

    fn hessian(&self, t: f64, x: &[f64]) -> Matrix {
        self.local(t, x).hessian
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogId {
    Free,
    Harmonic,
    BumpNonsmooth,
    AbsCubed,
    DrivenSquare,
}

impl CatalogId {
    pub const ALL: [CatalogId; 5] = [
        CatalogId::Free,
        CatalogId::Harmonic,
        CatalogId::BumpNonsmooth,
        CatalogId::AbsCubed,
        CatalogId::DrivenSquare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CatalogId::Free => "free",
            CatalogId::Harmonic => "harmonic",
            CatalogId::BumpNonsmooth => "bump_nonsmooth",
            CatalogId::AbsCubed => "abs_cubed",
            CatalogId::DrivenSquare => "driven_square",
        }
    }

    fn required_params(self) -> &'static [&'static str] {
        match self {
            CatalogId::Free | CatalogId::AbsCubed => &[],
            CatalogId::Harmonic => &["omega0"],
            CatalogId::BumpNonsmooth => &["alpha"],
            CatalogId::DrivenSquare => &["beta", "drive_period"],
        }
    }
}

impl fmt::Display for CatalogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CatalogId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CatalogId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownCatalogId(s.to_string()))
    }
}

/// Parameter map for [`make_potential`]. The optional key `dim` selects d = 1
/// or 2 (default 1); potentials are radial in d = 2.
pub type Params = BTreeMap<String, f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shape {
    Free,
    Harmonic { omega0: f64 },
    Bump { alpha: f64 },
    AbsCubed,
    Driven { beta: f64, period: f64 },
}

/// A catalog potential. Cheap to copy and safe to share across threads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CatalogPotential {
    id: CatalogId,
    dim: usize,
    shape: Shape,
}

pub fn make_potential(id: CatalogId, params: &Params) -> Result<CatalogPotential> {
    let required = id.required_params();
    for key in params.keys() {
        if key != "dim" && !required.contains(&key.as_str()) {
            return Err(Error::InvalidParam {
                key: key.clone(),
                reason: format!("not a parameter of `{id}`"),
            });
        }
    }
    let get = |key: &str| -> Result<f64> {
        let v = *params.get(key).ok_or_else(|| Error::MissingParam {
            id: id.to_string(),
            key: key.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::InvalidParam {
                key: key.to_string(),
                reason: "must be finite".into(),
            });
        }
        Ok(v)
    };
    let dim = match params.get("dim") {
        None => 1,
        Some(&v) if v == 1.0 => 1,
        Some(&v) if v == 2.0 => 2,
        Some(&v) => {
            return Err(Error::InvalidParam {
                key: "dim".into(),
                reason: format!("expected 1 or 2, got {v}"),
            })
        }
    };
    let shape = match id {
        CatalogId::Free => Shape::Free,
        CatalogId::Harmonic => Shape::Harmonic {
            omega0: get("omega0")?,
        },
        CatalogId::BumpNonsmooth => Shape::Bump {
            alpha: get("alpha")?,
        },
        CatalogId::AbsCubed => Shape::AbsCubed,
        CatalogId::DrivenSquare => {
            let period = get("drive_period")?;
            if period <= 0.0 {
                return Err(Error::InvalidParam {
                    key: "drive_period".into(),
                    reason: "must be positive".into(),
                });
            }
            Shape::Driven {
                beta: get("beta")?,
                period,
            }
        }
    };
    Ok(CatalogPotential { id, dim, shape })
}

impl CatalogPotential {
    pub fn id(&self) -> CatalogId {
        self.id
    }

    /// Convenience constructors for the common desk-scale cases.
    pub fn free(dim: usize) -> Self {
        CatalogPotential {
            id: CatalogId::Free,
            dim,
            shape: Shape::Free,
        }
    }

    pub fn harmonic(omega0: f64, dim: usize) -> Self {
        CatalogPotential {
            id: CatalogId::Harmonic,
            dim,
            shape: Shape::Harmonic { omega0 },
        }
    }

    pub fn bump(alpha: f64) -> Self {
        CatalogPotential {
            id: CatalogId::BumpNonsmooth,
            dim: 1,
            shape: Shape::Bump { alpha },
        }
    }

    pub fn abs_cubed() -> Self {
        CatalogPotential {
            id: CatalogId::AbsCubed,
            dim: 1,
            shape: Shape::AbsCubed,
        }
    }

    pub fn driven_square(beta: f64, drive_period: f64) -> Self {
        CatalogPotential {
            id: CatalogId::DrivenSquare,
            dim: 1,
            shape: Shape::Driven {
                beta,
                period: drive_period,
            },
        }
    }

    /// Radial profile g(q), g'(q), g''(q) with q = |x|² so that
    /// V = g(q), ∇V = 2g'x and D²V = 2g'I + 4g''xxᵀ.
    fn profile(&self, t: f64, q: f64) -> (f64, f64, f64) {
        match self.shape {
            Shape::Free => (0.0, 0.0, 0.0),
            Shape::Harmonic { omega0 } => {
                let w2 = omega0 * omega0;
                (0.5 * w2 * q, 0.5 * w2, 0.0)
            }
            Shape::Bump { alpha } => {
                let m = (1.0 - q).max(0.0);
                let m2 = m * m;
                (
                    0.5 * q + alpha * m2 * m2,
                    0.5 - 4.0 * alpha * m2 * m,
                    12.0 * alpha * m2,
                )
            }
            // Handled separately in `local`: the profile is singular at q = 0.
            Shape::AbsCubed => unreachable!(),
            Shape::Driven { beta, period } => {
                let (w, w1, w2) = smooth_bump(q);
                let c = beta * square_wave(t / period);
                (0.5 * q + c * w, 0.5 + c * w1, c * w2)
            }
        }
    }
}

/// Support radius of the drive profile w.
const DRIVE_RADIUS: f64 = 3.0;

/// w(q) = exp(1 − 1/(1−q/R²)) for q < R² and zero otherwise, with its first
/// two q-derivatives. w(0) = 1 and w is C^∞ at q = R².
fn smooth_bump(q: f64) -> (f64, f64, f64) {
    let r2 = DRIVE_RADIUS * DRIVE_RADIUS;
    let u = q / r2;
    if u >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let inv = 1.0 / (1.0 - u);
    let w = (1.0 - inv).exp();
    let w1 = -w * inv * inv / r2;
    let w2 = w * (inv.powi(4) - 2.0 * inv.powi(3)) / (r2 * r2);
    (w, w1, w2)
}

/// Right-continuous ±1 square wave of unit period: +1 on [k, k+½), −1 on
/// [k+½, k+1).
pub fn square_wave(u: f64) -> f64 {
    let mut h = 2.0 * u;
    let k = h.round();
    if (h - k).abs() <= 1e-12 * k.abs().max(1.0) {
        h = k;
    }
    if (h.floor() as i64).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

impl Potential for CatalogPotential {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn local(&self, t: f64, x: &[f64]) -> LocalExpansion {
        let d = self.dim;
        let mut out = LocalExpansion::default();
        let q: f64 = x[..d].iter().map(|v| v * v).sum();
        if let Shape::AbsCubed = self.shape {
            // V = r³/6, ∇V = r x / 2, D²V = (r I + xxᵀ/r) / 2.
            let r = q.sqrt();
            out.value = r * q / 6.0;
            for i in 0..d {
                out.gradient[i] = 0.5 * r * x[i];
                for j in 0..=i {
                    let delta = if i == j { r } else { 0.0 };
                    let outer = if r > 0.0 { x[i] * x[j] / r } else { 0.0 };
                    out.hessian[i][j] = 0.5 * (delta + outer);
                    out.hessian[j][i] = out.hessian[i][j];
                }
            }
            return out;
        }
        let (g, g1, g2) = self.profile(t, q);
        out.value = g;
        for i in 0..d {
            out.gradient[i] = 2.0 * g1 * x[i];
            for j in 0..=i {
                let delta = if i == j { 2.0 * g1 } else { 0.0 };
                out.hessian[i][j] = delta + 4.0 * g2 * x[i] * x[j];
                out.hessian[j][i] = out.hessian[i][j];
            }
        }
        out
    }

    fn time_discontinuities(&self, a: f64, b: f64) -> Vec<f64> {
        let Shape::Driven { period, .. } = self.shape else {
            return Vec::new();
        };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let half = 0.5 * period;
        let mut k = (lo / half).floor() as i64;
        let mut out = Vec::new();
        loop {
            let tk = k as f64 * half;
            if tk >= hi {
                break;
            }
            if tk > lo {
                out.push(tk);
            }
            k += 1;
        }
        out
    }

    fn smoothness(&self) -> SmoothnessTag {
        match self.shape {
            Shape::Free | Shape::Harmonic { .. } => SmoothnessTag::SmoothQuadraticGrowth,
            Shape::Driven { .. } => SmoothnessTag::SmoothQuadraticGrowth,
            Shape::Bump { alpha } if alpha == 0.0 => SmoothnessTag::SmoothQuadraticGrowth,
            // D²V jumps in its second derivative: H^{d+1}_ul holds only for d = 1.
            Shape::Bump { .. } if self.dim == 1 => SmoothnessTag::AssumptionANonsmooth,
            Shape::Bump { .. } | Shape::AbsCubed => SmoothnessTag::ViolatesA,
        }
    }

    fn is_autonomous(&self) -> bool {
        !matches!(self.shape, Shape::Driven { beta, .. } if beta != 0.0)
    }

    fn label(&self) -> String {
        let body = match self.shape {
            Shape::Free => "free".to_string(),
            Shape::Harmonic { omega0 } => format!("harmonic(omega0={omega0:?})"),
            Shape::Bump { alpha } => format!("bump_nonsmooth(alpha={alpha:?})"),
            Shape::AbsCubed => "abs_cubed".to_string(),
            Shape::Driven { beta, period } => {
                format!("driven_square(beta={beta:?},drive_period={period:?})")
            }
        };
        if self.dim == 1 {
            body
        } else {
            format!("{body}[d={}]", self.dim)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(kv: &[(&str, f64)]) -> Params {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn free_is_zero() {
        let p = make_potential(CatalogId::Free, &Params::new()).unwrap();
        assert_eq!(p.value(0.3, &[1.7]), 0.0);
    }

    #[test]
    fn harmonic_hessian_is_constant() {
        let p = make_potential(CatalogId::Harmonic, &params(&[("omega0", 1.0)])).unwrap();
        for &(t, x) in &[(0.0, 0.0), (1.3, -4.0), (-2.0, 7.5)] {
            assert_eq!(p.hessian(t, &[x])[0][0], 1.0);
        }
    }

    #[test]
    fn unknown_id_and_missing_params_are_errors() {
        assert!(matches!(
            "quartic".parse::<CatalogId>(),
            Err(Error::UnknownCatalogId(_))
        ));
        assert!(matches!(
            make_potential(CatalogId::Harmonic, &Params::new()),
            Err(Error::MissingParam { .. })
        ));
        assert!(matches!(
            make_potential(CatalogId::DrivenSquare, &params(&[("beta", 0.2)])),
            Err(Error::MissingParam { .. })
        ));
        assert!(matches!(
            make_potential(CatalogId::Free, &params(&[("omega0", 1.0)])),
            Err(Error::InvalidParam { .. })
        ));
    }

    /// One-sided differences of V'' on each side of x = 1 give the jump of
    /// the fourth derivative.
    #[test]
    fn bump_fourth_derivative_jump() {
        let p = CatalogPotential::bump(1.0);
        let h2 = |x: f64| p.hessian(0.0, &[x])[0][0];
        let h = 1e-3;
        // Second derivative of V'' from samples strictly on one side.
        let one_sided = |sign: f64| {
            let f = |k: f64| h2(1.0 + sign * k * h);
            // Forward-difference second derivative, O(h^3) accurate.
            (35.0 * f(0.0) - 104.0 * f(1.0) + 114.0 * f(2.0) - 56.0 * f(3.0) + 11.0 * f(4.0))
                / (12.0 * h * h)
        };
        let left = one_sided(-1.0);
        let right = one_sided(1.0);
        assert!(((left - right).abs() - 384.0).abs() < 1e-2, "{left} {right}");
        // Symbolic value on the inside: d⁴/dx⁴ (1−x²)⁴ at x = 1 is 4!·2⁴.
        assert!((left - 384.0).abs() < 1e-2 && right.abs() < 1e-6);
    }

    #[test]
    fn square_wave_is_right_continuous() {
        assert_eq!(square_wave(0.0), 1.0);
        assert_eq!(square_wave(0.4999), 1.0);
        assert_eq!(square_wave(0.5), -1.0);
        assert_eq!(square_wave(1.0), 1.0);
        assert_eq!(square_wave(-0.25), -1.0);
        let p = CatalogPotential::driven_square(0.2, 0.1);
        assert_eq!(p.time_discontinuities(0.0, 0.35), vec![0.05, 0.1, 0.15000000000000002, 0.2, 0.25, 0.30000000000000004]);
        // 0.15 computed as 3 * 0.05 lands on the right side of the jump.
        assert_eq!(square_wave(3.0 * 0.05 / 0.1), -1.0);
    }

    #[test]
    fn smoothness_tags() {
        assert_eq!(CatalogPotential::bump(1.0).smoothness(), SmoothnessTag::AssumptionANonsmooth);
        assert_eq!(CatalogPotential::abs_cubed().smoothness(), SmoothnessTag::ViolatesA);
        assert_eq!(CatalogPotential::harmonic(1.0, 2).smoothness(), SmoothnessTag::SmoothQuadraticGrowth);
    }

    fn catalog() -> Vec<CatalogPotential> {
        vec![
            CatalogPotential::free(1),
            CatalogPotential::harmonic(1.3, 1),
            CatalogPotential::bump(1.0),
            CatalogPotential::abs_cubed(),
            CatalogPotential::driven_square(0.2, 0.1),
            CatalogPotential::harmonic(0.7, 2),
            make_potential(CatalogId::BumpNonsmooth, &params(&[("alpha", 0.5), ("dim", 2.0)])).unwrap(),
            make_potential(CatalogId::DrivenSquare, &params(&[("beta", 0.3), ("drive_period", 0.2), ("dim", 2.0)])).unwrap(),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn derivatives_match_finite_differences(
            idx in 0usize..8, t in 0.0f64..1.0, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0,
        ) {
            let p = catalog()[idx];
            let d = p.dimension();
            // Stay away from the drive jumps so the FD stencil sees one branch.
            let t = if p.is_autonomous() { t } else { 0.025 + 0.05 * (t * 10.0).floor() };
            let x = [x0, x1];
            let loc = p.local(t, &x[..d]);
            let h = 1e-5;
            for i in 0..d {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (p.value(t, &xp[..d]) - p.value(t, &xm[..d])) / (2.0 * h);
                let g = loc.gradient[i];
                prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "grad {i}: {fd} vs {g}");
                for j in 0..d {
                    let fdh = (p.gradient(t, &xp[..d])[j] - p.gradient(t, &xm[..d])[j]) / (2.0 * h);
                    let hij = loc.hessian[i][j];
                    prop_assert!((fdh - hij).abs() <= 1e-5 * hij.abs().max(1.0));
                    prop_assert_eq!(hij, loc.hessian[j][i]);
                    prop_assert!(hij.is_finite());
                }
            }
        }
    }
}
