//! Pinning the symmetries of the joint problem between steps.
//!
//! A constant offset of a local warp is indistinguishable from `τ`, and a
//! translation `d` of the volume is undone by shifting each tilt by
//! `R(α_m) (d_x cos θ_m + d_z sin θ_m, d_y)`. A small volume rotation `ω`
//! about an axis in the x-z plane shows up in tilt `m` as an in-plane
//! rotation `ω_z cos θ_m − ω_x sin θ_m`, plus an out-of-plane part that the
//! data only weakly constrains.

use super::state::EstimatedTilt;
use crate::geometry::cell_center;
use crate::neural_field::OutputActivation;
use crate::real::Real;

const MEAN_GRID: usize = 8;

/// Moves the mean displacement of the local warp over the image into `τ`.
/// The composed warp is unchanged.
pub fn recenter_local<T: Real>(tilt: &mut EstimatedTilt<T>) {
    if tilt.local.mlp().arch().output_activation != OutputActivation::Linear {
        return;
    }
    let g = MEAN_GRID;
    let pts: Vec<T> = (0..g * g)
        .flat_map(|i| [cell_center::<T>(i % g, g), cell_center(i / g, g)])
        .collect();
    let out = tilt.local.eval_batch(&pts).expect("2D warp network");
    let inv = T::one() / T::from_usize_(g * g);
    let c = [out.column(0).sum() * inv, out.column(1).sum() * inv];
    let params = tilt.local.mlp_mut().params_mut().values_mut();
    let len = params.len();
    params[len - 2] -= c[0];
    params[len - 1] -= c[1];
    let global = tilt.global.values_mut();
    global[1] += c[0];
    global[2] += c[1];
}

/// Removes from the stacked in-plane angles their least-squares component
/// along `cos θ_m` and `sin θ_m`.
pub fn project_rotation<T: Real>(tilts: &mut [EstimatedTilt<T>], angles_deg: &[f64]) {
    let mut gram = [[0.0; 2]; 2];
    let mut rhs = [0.0; 2];
    let basis: Vec<[f64; 2]> = angles_deg
        .iter()
        .map(|a| {
            let (s, c) = a.to_radians().sin_cos();
            [c, s]
        })
        .collect();
    for (t, b) in tilts.iter().zip(&basis) {
        let alpha = t.global.values()[0].as_f64();
        for i in 0..2 {
            rhs[i] += b[i] * alpha;
            for j in 0..2 {
                gram[i][j] += b[i] * b[j];
            }
        }
    }
    let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
    if rhs == [0.0; 2] || det.abs() <= 1e-12 * (gram[0][0] + gram[1][1]).powi(2) {
        return;
    }
    let k = [
        (rhs[0] * gram[1][1] - rhs[1] * gram[0][1]) / det,
        (gram[0][0] * rhs[1] - gram[1][0] * rhs[0]) / det,
    ];
    for (t, b) in tilts.iter_mut().zip(&basis) {
        t.global.values_mut()[0] -= T::lit(k[0] * b[0] + k[1] * b[1]);
    }
}

/// Removes from the stacked shifts their least-squares component along the
/// three volume-translation directions.
pub fn project_translation<T: Real>(tilts: &mut [EstimatedTilt<T>], angles_deg: &[f64]) {
    let dirs: Vec<[[f64; 2]; 3]> = tilts
        .iter()
        .zip(angles_deg)
        .map(|(t, &theta)| {
            let (sa, ca) = t.global.values()[0].as_f64().sin_cos();
            let (st, ct) = theta.to_radians().sin_cos();
            let rot = |v: [f64; 2]| [v[0] * ca - v[1] * sa, v[0] * sa + v[1] * ca];
            [rot([ct, 0.0]), rot([st, 0.0]), rot([0.0, 1.0])]
        })
        .collect();
    let mut gram = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (t, d) in tilts.iter().zip(&dirs) {
        let tau = [t.global.values()[1].as_f64(), t.global.values()[2].as_f64()];
        for a in 0..3 {
            rhs[a] += d[a][0] * tau[0] + d[a][1] * tau[1];
            for b in 0..3 {
                gram[a][b] += d[a][0] * d[b][0] + d[a][1] * d[b][1];
            }
        }
    }
    let Some(k) = solve3(gram, rhs) else { return };
    if k == [0.0; 3] {
        return;
    }
    for (t, d) in tilts.iter_mut().zip(&dirs) {
        let v = t.global.values_mut();
        for (axis, slot) in [(0, 1), (1, 2)] {
            let off: f64 = (0..3).map(|a| k[a] * d[a][axis]).sum();
            v[slot] -= T::lit(off);
        }
    }
}

/// Cramer's rule; `None` when the directions are degenerate.
fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let scale: f64 = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if d.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut x = [0.0; 3];
    for (i, xi) in x.iter_mut().enumerate() {
        let mut mi = m;
        for r in 0..3 {
            mi[r][i] = b[r];
        }
        *xi = det(&mi) / d;
    }
    Some(x)
}
