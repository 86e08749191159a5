use serde::{Deserialize, Serialize};

use super::bvp::{shoot, BvpOptions};
use super::{to_vector, Decoded};
use crate::error::{Error, Result};
use crate::linalg::{mat_det, mat_inv, mat_mul, mat_trace, mat_transpose, mat_vec};
use crate::potential::{Matrix, Potential, Vector, MAX_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionData {
    pub s: f64,
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub action: f64,
    pub ds_dx: Vec<f64>,
    pub ds_dy: Vec<f64>,
    pub d2s_xx: Vec<Vec<f64>>,
    pub d2s_xy: Vec<Vec<f64>>,
    pub d2s_yy: Vec<Vec<f64>>,
    /// Regular part [S − |x−y|²/(2(t−s))]/(t−s).
    pub omega: f64,
    pub lap_omega: f64,
    pub det_mixed: f64,
    /// |∂ₜS + ½|∇ₓS|² + V(t, x)| by centred differences in t; absent when a
    /// time discontinuity lies within one difference step of t.
    pub hj_residual: Option<f64>,
}

/// Action quantities at the exact target x, derived from a converged shot
/// that reached x_r = x − e. First- and second-order corrections in e remove
/// the Newton residual from S and from the momenta.
pub(crate) struct EndpointData {
    /// S − |x − y|²/(2σ) at x.
    pub deviation: f64,
    pub xi: Vector,
    pub eta: Vector,
    /// ∂²S/∂x² − I/σ.
    pub z: Matrix,
    pub xeta_inv: Matrix,
}

pub(crate) fn endpoint_data(d: usize, dec: &Decoded, eta: Vector, x: &Vector) -> Result<EndpointData> {
    let sigma = dec.sigma;
    let z = dec
        .z(d)
        .ok_or_else(|| Error::TimeStepTooLarge("dx/deta is singular".into()))?;
    let xeta_inv = mat_inv(d, &dec.xeta).expect("checked by z()");
    let mut e = [0.0; MAX_DIM];
    for i in 0..d {
        e[i] = x[i] - dec.x[i];
    }
    let ze = mat_vec(d, &z, &e);
    let mut deviation = dec.action_deviation(d);
    for i in 0..d {
        deviation += (dec.v[i] - dec.u[i] / sigma) * e[i] + 0.5 * e[i] * ze[i];
    }
    let mut xi = dec.xi;
    let de = mat_vec(d, &xeta_inv, &e);
    let mut eta_x = eta;
    for i in 0..d {
        xi[i] += ze[i] + e[i] / sigma;
        eta_x[i] += de[i];
    }
    Ok(EndpointData {
        deviation,
        xi,
        eta: eta_x,
        z,
        xeta_inv,
    })
}

fn rows(d: usize, m: &Matrix) -> Vec<Vec<f64>> {
    (0..d).map(|i| m[i][..d].to_vec()).collect()
}

/// Action data with the default boundary-value options.
pub fn action_data(p: &dyn Potential, s: f64, t: f64, x: &[f64], y: &[f64]) -> Result<ActionData> {
    action_data_with(p, s, t, x, y, &BvpOptions::default())
}

pub fn action_data_with(
    p: &dyn Potential,
    s: f64,
    t: f64,
    x: &[f64],
    y: &[f64],
    opts: &BvpOptions,
) -> Result<ActionData> {
    let d = p.dimension();
    let xv = to_vector(d, x)?;
    let yv = to_vector(d, y)?;
    let sigma = t - s;
    let mut h = 0.0;
    let shot = shoot(p, s, t, yv, xv, opts, &[], &mut h)?;
    let dec = shot.decode(p, s, t, yv);
    let ep = endpoint_data(d, &dec, shot.eta, &xv)?;

    let mut d2s_xx = ep.z;
    for (i, row) in d2s_xx.iter_mut().enumerate().take(d) {
        row[i] += 1.0 / sigma;
    }
    let mut d2s_xy = mat_transpose(d, &ep.xeta_inv);
    for row in d2s_xy.iter_mut().take(d) {
        for v in row.iter_mut().take(d) {
            *v = -*v;
        }
    }
    let d2s_yy = mat_mul(d, &ep.xeta_inv, &dec.xy);
    let det_mixed = mat_det(d, &d2s_xy);
    let floor = 0.5 * sigma.abs().powi(-(d as i32));
    if !(det_mixed.abs() >= floor) {
        return Err(Error::DeterminantDegenerate {
            det: det_mixed,
            floor,
        });
    }
    let free: f64 = (0..d).map(|i| (xv[i] - yv[i]).powi(2)).sum::<f64>() / (2.0 * sigma);

    let hj_residual = hamilton_jacobi_residual(p, s, t, &xv, &yv, opts, &ep)?;
    Ok(ActionData {
        s,
        t,
        x: x.to_vec(),
        y: y.to_vec(),
        action: free + ep.deviation,
        ds_dx: ep.xi[..d].to_vec(),
        ds_dy: ep.eta[..d].iter().map(|e| -e).collect(),
        d2s_xx: rows(d, &d2s_xx),
        d2s_xy: rows(d, &d2s_xy),
        d2s_yy: rows(d, &d2s_yy),
        omega: ep.deviation / sigma,
        lap_omega: mat_trace(d, &ep.z) / sigma,
        det_mixed,
        hj_residual,
    })
}

/// Finite-difference cross-check of the derivatives in [`ActionData`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub data: ActionData,
    /// max_j |FD ∂S/∂x_j − ξ_j| / max(|ξ_j|, 1)
    pub dx_rel: f64,
    /// max_j |FD ∂S/∂y_j + η_j| / max(|η_j|, 1)
    pub dy_rel: f64,
    /// max |FD ∂ξ_i/∂y_j − ∂²S/∂x_i∂y_j| / |∂²S/∂x_i∂y_j|, diagonal entries
    pub dxy_rel: f64,
}

/// Centred differences of S (and of ∂S/∂x) with step `h` in every
/// coordinate of x and y.
pub fn gradient_check(p: &dyn Potential, s: f64, t: f64, x: &[f64], y: &[f64], h: f64) -> Result<GradientCheck> {
    let data = action_data(p, s, t, x, y)?;
    let d = p.dimension();
    let shifted = |v: &[f64], j: usize, by: f64| {
        let mut w = v.to_vec();
        w[j] += by;
        w
    };
    let (mut dx_rel, mut dy_rel, mut dxy_rel) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..d {
        let sp = action_data(p, s, t, &shifted(x, j, h), y)?.action;
        let sm = action_data(p, s, t, &shifted(x, j, -h), y)?.action;
        let fd = (sp - sm) / (2.0 * h);
        dx_rel = dx_rel.max((fd - data.ds_dx[j]).abs() / data.ds_dx[j].abs().max(1.0));
        let yp = action_data(p, s, t, x, &shifted(y, j, h))?;
        let ym = action_data(p, s, t, x, &shifted(y, j, -h))?;
        let fd = (yp.action - ym.action) / (2.0 * h);
        dy_rel = dy_rel.max((fd - data.ds_dy[j]).abs() / data.ds_dy[j].abs().max(1.0));
        let fd = (yp.ds_dx[j] - ym.ds_dx[j]) / (2.0 * h);
        dxy_rel = dxy_rel.max((fd - data.d2s_xy[j][j]).abs() / data.d2s_xy[j][j].abs());
    }
    Ok(GradientCheck {
        data,
        dx_rel,
        dy_rel,
        dxy_rel,
    })
}

/// ∂ₜS is split as the analytic free part −|x−y|²/(2σ²) plus a centred
/// difference of the smooth deviation, which avoids the large third
/// derivative of the free action.
fn hamilton_jacobi_residual(
    p: &dyn Potential,
    s: f64,
    t: f64,
    x: &Vector,
    y: &Vector,
    opts: &BvpOptions,
    ep: &EndpointData,
) -> Result<Option<f64>> {
    let d = p.dimension();
    let sigma = t - s;
    let h = 1e-3 * sigma.abs();
    if !p.time_discontinuities(t - 2.0 * h, t + 2.0 * h).is_empty() {
        return Ok(None);
    }
    let mut fd_opts = *opts;
    fd_opts.delta_max = opts.delta_max.max(sigma.abs() + 2.0 * h);
    fd_opts.initial_eta = Some(ep.eta);
    let dev_at = |tt: f64| -> Result<f64> {
        let mut hh = 0.0;
        let shot = shoot(p, s, tt, *y, *x, &fd_opts, &[], &mut hh)?;
        let dec = shot.decode(p, s, tt, *y);
        Ok(endpoint_data(d, &dec, shot.eta, x)?.deviation)
    };
    let ddev = (dev_at(t + h)? - dev_at(t - h)?) / (2.0 * h);
    let r2: f64 = (0..d).map(|i| (x[i] - y[i]).powi(2)).sum();
    let dfree = -r2 / (2.0 * sigma * sigma);
    let xi2: f64 = ep.xi[..d].iter().map(|v| v * v).sum();
    let v = p.value(t, &x[..d]);
    Ok(Some((dfree + ddev + 0.5 * xi2 + v).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::CatalogPotential;
    use proptest::prelude::*;

    #[test]
    fn free_action_is_exact() {
        let p = CatalogPotential::free(1);
        let a = action_data(&p, 0.0, 0.2, &[1.3], &[-0.4]).unwrap();
        assert!((a.action - 1.7f64.powi(2) / 0.4).abs() < 1e-12);
        assert!(a.omega.abs() <= 1e-12);
        assert!(a.lap_omega.abs() <= 1e-12);
        assert!((a.det_mixed + 1.0 / 0.2).abs() < 1e-12);
    }

    #[test]
    fn harmonic_closed_forms() {
        let p = CatalogPotential::harmonic(1.0, 1);
        let a = action_data(&p, 0.0, 0.1, &[1.0], &[0.0]).unwrap();
        let exact = 0.1f64.cos() / (2.0 * 0.1f64.sin());
        assert!((a.action - exact).abs() < 1e-10);
        assert!((a.action - 4.983322).abs() < 1e-6);
        let opts = BvpOptions::with_delta_max(0.5);
        let b = action_data_with(&p, 0.0, 0.5, &[0.7], &[-0.2], &opts).unwrap();
        let exact_lap = (1.0 / 0.5f64.tan() - 2.0) / 0.5;
        assert!((b.lap_omega - exact_lap).abs() < 1e-9);
        assert!((b.lap_omega + 0.339025).abs() < 1e-6);
        assert!(b.hj_residual.unwrap() < 1e-6);
    }

    #[test]
    fn hj_skipped_near_jumps() {
        let p = CatalogPotential::driven_square(0.2, 0.1);
        let a = action_data(&p, 0.0, 0.1, &[0.5], &[0.0]).unwrap();
        assert!(a.hj_residual.is_none());
        let b = action_data(&p, 0.0, 0.12, &[0.5], &[0.0]).unwrap();
        assert!(b.hj_residual.unwrap() < 1e-5);
    }

    fn fd_check(p: &dyn Potential, s: f64, t: f64, x: f64, y: f64) -> std::result::Result<(), TestCaseError> {
        let a = action_data(p, s, t, &[x], &[y]).unwrap();
        let h = 1e-4;
        let sx = |xx: f64| action_data(p, s, t, &[xx], &[y]).unwrap().action;
        let sy = |yy: f64| action_data(p, s, t, &[x], &[yy]).unwrap().action;
        let fdx = (sx(x + h) - sx(x - h)) / (2.0 * h);
        let fdy = (sy(y + h) - sy(y - h)) / (2.0 * h);
        prop_assert!((fdx - a.ds_dx[0]).abs() <= 1e-5 * a.ds_dx[0].abs().max(1.0), "{fdx} {}", a.ds_dx[0]);
        prop_assert!((fdy - a.ds_dy[0]).abs() <= 1e-5 * a.ds_dy[0].abs().max(1.0));
        // Mixed second derivative against a difference of ∂S/∂x in y.
        let gx = |yy: f64| action_data(p, s, t, &[x], &[yy]).unwrap().ds_dx[0];
        let fdxy = (gx(y + h) - gx(y - h)) / (2.0 * h);
        prop_assert!((fdxy - a.d2s_xy[0][0]).abs() <= 1e-4 * a.d2s_xy[0][0].abs());
        if let Some(hj) = a.hj_residual {
            prop_assert!(hj <= 1e-5, "hj {hj}");
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn gradient_identities_bump(x in -4.0f64..4.0, y in -4.0f64..4.0, dt in 0.05f64..0.25) {
            fd_check(&CatalogPotential::bump(1.0), 0.0, dt, x, y)?;
        }

        #[test]
        fn gradient_identities_harmonic(x in -4.0f64..4.0, y in -4.0f64..4.0, dt in 0.05f64..0.25) {
            fd_check(&CatalogPotential::harmonic(1.0, 1), 0.0, dt, x, y)?;
        }

        #[test]
        fn gradient_identities_driven(x in -3.0f64..3.0, y in -3.0f64..3.0, s in 0.0f64..0.2) {
            fd_check(&CatalogPotential::driven_square(0.2, 0.1), s, s + 0.17, x, y)?;
        }
    }
}
