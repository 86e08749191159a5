use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::window::{Window, WindowSpec};
use crate::error::{Error, Result};
use crate::kernels::KernelOperator;
use crate::linalg::{norm, CMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    PowerIteration,
    DenseSvd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorNormEstimate {
    pub value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    /// ‖MᴴMv − σ²v‖/σ² at the returned unit vector v.
    pub rel_residual: f64,
}

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;
const START_SEED: u64 = 0x5eed_0f_5107;

/// Dense SVD is only offered up to this size.
pub const SVD_MAX_DIM: usize = 1024;

fn normal_residual(m: &CMatrix, v: &[Complex64]) -> (f64, Vec<Complex64>, f64) {
    let mv = m.apply(v);
    let rho = mv.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let w = adjoint_apply(m, &mv);
    let res: f64 = w
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b * rho).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let rel = if rho > 0.0 { res / rho } else { 0.0 };
    (rho, w, rel)
}

fn adjoint_apply(m: &CMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m.cols];
    for (i, vi) in v.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(m.row(i)) {
            *o += a.conj() * vi;
        }
    }
    out
}

/// Squarings of the normal matrix tried before the vector iteration.
const SQUARINGS: usize = 16;

/// Only matrices this narrow are squared; wider ones iterate directly.
const SQUARING_MAX_COLS: usize = 512;

/// Start vector from (MᴴM)^(2^k): each squaring doubles the number of power
/// steps, which matters when the top singular values nearly coincide.
fn squared_start(m: &CMatrix) -> Option<Vec<Complex64>> {
    if m.cols > SQUARING_MAX_COLS {
        return None;
    }
    let mut n = m.adjoint().matmul(m);
    for _ in 0..SQUARINGS {
        let scale = n.max_abs();
        if !(scale > 0.0 && scale.is_finite()) {
            return None;
        }
        n.scale(Complex64::new(1.0 / scale, 0.0));
        n = n.matmul(&n);
    }
    let best = (0..n.cols)
        .map(|j| (j, (0..n.rows).map(|i| n.get(i, j).norm_sqr()).sum::<f64>()))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    if !(best.1 > 0.0) {
        return None;
    }
    let v: Vec<Complex64> = (0..n.rows).map(|i| n.get(i, best.0)).collect();
    let nv = norm(&v);
    Some(v.into_iter().map(|z| z / nv).collect())
}

fn power_iteration(m: &CMatrix) -> Result<OperatorNormEstimate> {
    let mut v = match squared_start(m) {
        Some(v) => v,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
            let v: Vec<Complex64> = (0..m.cols)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let nv = norm(&v);
            v.into_iter().map(|z| z / nv).collect()
        }
    };
    let mut rel = f64::INFINITY;
    for iter in 1..=POWER_MAX_ITERS {
        let (rho, w, r) = normal_residual(m, &v);
        rel = r;
        if rho == 0.0 || rel <= POWER_TOL {
            return Ok(OperatorNormEstimate {
                value: rho.sqrt(),
                method: NormMethod::PowerIteration,
                iterations: iter,
                rel_residual: rel,
            });
        }
        let nw = norm(&w);
        v = w.into_iter().map(|z| z / nw).collect();
    }
    Err(Error::NormNotConverged {
        iters: POWER_MAX_ITERS,
        rel,
    })
}

fn dense_svd(m: &CMatrix) -> Result<OperatorNormEstimate> {
    if m.rows.max(m.cols) > SVD_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "dense SVD limited to {SVD_MAX_DIM} rows, got {}",
            m.rows.max(m.cols)
        )));
    }
    let a = DMatrix::from_fn(m.rows, m.cols, |i, j| m.get(i, j));
    let svd = a.svd(false, true);
    let (k, &value) = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::InvalidArgument("empty matrix".into()))?;
    let v_t = svd.v_t.as_ref().expect("requested right vectors");
    let v: Vec<Complex64> = v_t.row(k).iter().map(|z| z.conj()).collect();
    let (_, _, rel) = normal_residual(m, &v);
    Ok(OperatorNormEstimate {
        value,
        method: NormMethod::DenseSvd,
        iterations: 1,
        rel_residual: rel,
    })
}

/// Largest singular value of a (compressed) matrix.
pub fn compressed_norm(m: &CMatrix, method: NormMethod) -> Result<OperatorNormEstimate> {
    if !m.is_finite() {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    match method {
        NormMethod::PowerIteration => power_iteration(m),
        NormMethod::DenseSvd => dense_svd(m),
    }
}

/// Windowed operator norm ‖P·M·P‖.
pub fn operator_norm(op: &KernelOperator, window: &WindowSpec, method: NormMethod) -> Result<OperatorNormEstimate> {
    let w = Window::cached(&op.grid, *window, op.hbar)?;
    compressed_norm(&w.compress_operator(&op.matrix), method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Grid, Label};

    fn op(m: CMatrix, grid: Grid) -> KernelOperator {
        KernelOperator::new(Label::Difference, 0.0, 0.1, 1.0, grid, m).unwrap()
    }

    #[test]
    fn identity_has_unit_norm_in_any_window() {
        let grid = Grid::new(1, 128, 8.0, 0.5).unwrap();
        let id = op(CMatrix::identity(128), grid);
        for spec in [WindowSpec::Sharp { rho: 0.5 }, WindowSpec::Sharp { rho: 0.25 }] {
            for method in [NormMethod::PowerIteration, NormMethod::DenseSvd] {
                let est = operator_norm(&id, &spec, method).unwrap();
                assert!((est.value - 1.0).abs() < 1e-12, "{est:?}");
            }
        }
        // The smooth projector itself has norm at most one.
        let smooth = operator_norm(&id, &WindowSpec::smooth(0.5), NormMethod::DenseSvd).unwrap();
        assert!(smooth.value <= 1.0 + 1e-12 && smooth.value > 0.95, "{smooth:?}");
    }

    #[test]
    fn diagonal_operator_inside_window() {
        let grid = Grid::new(1, 64, 8.0, 0.5).unwrap();
        let mut m = CMatrix::identity(64);
        m.data[32 * 64 + 32] = Complex64::new(3.0, 0.0);
        let est = operator_norm(&op(m, grid), &WindowSpec::Sharp { rho: 0.5 }, NormMethod::PowerIteration).unwrap();
        assert!((est.value - 3.0).abs() < 1e-10);
        assert!(est.rel_residual <= 1e-8);
    }

    #[test]
    fn power_iteration_matches_svd_on_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = CMatrix::from_fn(256, 256, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let a = compressed_norm(&m, NormMethod::PowerIteration).unwrap();
        let b = compressed_norm(&m, NormMethod::DenseSvd).unwrap();
        assert!((a.value - b.value).abs() <= 1e-8 * b.value, "{a:?} {b:?}");
        assert!(a.rel_residual <= 1e-8 && b.rel_residual <= 1e-8);
    }

    #[test]
    fn zero_matrix() {
        let est = compressed_norm(&CMatrix::zeros(5, 5), NormMethod::PowerIteration).unwrap();
        assert_eq!(est.value, 0.0);
    }
}
