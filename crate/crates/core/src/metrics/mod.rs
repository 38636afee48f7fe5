//! Evaluation: SNR, Fourier shell correlation, registration and
//! deformation-parameter errors.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::deformation::{pixels_per_unit, warp_coords, DeformationParams, LocalWarp};
use crate::error::{Error, Result};
use crate::geometry::{cell_center, VolumeGrid};
use crate::real::Real;

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// `10 log10(Var(s_true) / Var(s - s_true))`; `+inf` when the residual has
/// zero variance.
pub fn snr_db<T: Real>(s: &[T], s_true: &[T]) -> Result<f64> {
    if s.len() != s_true.len() || s.is_empty() {
        return Err(Error::shape("snr_db", s_true.len(), s.len()));
    }
    let (_, signal) = mean_var(s_true.iter().map(|v| v.as_f64()));
    let (_, residual) = mean_var(s.iter().zip(s_true).map(|(a, b)| a.as_f64() - b.as_f64()));
    if residual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / residual).log10())
}

/// Pearson correlation of two equally long signals.
pub fn ncc<T: Real>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len(), "ncc length mismatch");
    let (ma, va) = mean_var(a.iter().map(|v| v.as_f64()));
    let (mb, vb) = mean_var(b.iter().map(|v| v.as_f64()));
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x.as_f64() - ma) * (y.as_f64() - mb))
        .sum::<f64>()
        / a.len() as f64;
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FscCurve {
    /// Shell centers, cycles per unit length.
    pub frequencies: Vec<f64>,
    pub correlation: Vec<f64>,
    pub counts: Vec<usize>,
    /// Shells where either volume has no energy; their correlation is 0.
    pub degenerate: Vec<bool>,
}

impl FscCurve {
    pub fn len(&self) -> usize {
        self.correlation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correlation.is_empty()
    }
}

fn fft3(vol: &VolumeGrid<impl Real>, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    let n = vol.n();
    let mut data: Vec<Complex<f64>> = vol.data().iter().map(|v| Complex::new(v.as_f64(), 0.0)).collect();
    let fft = planner.plan_fft_forward(n);
    // x lines are contiguous
    for line in data.chunks_mut(n) {
        fft.process(line);
    }
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for stride in [n, n * n] {
        for base in 0..n * n * n {
            let pos = (base / stride) % n;
            if pos != 0 {
                continue;
            }
            for (i, b) in buf.iter_mut().enumerate() {
                *b = data[base + i * stride];
            }
            fft.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                data[base + i * stride] = *b;
            }
        }
    }
    data
}

/// Fourier shell correlation over `shells` equal-width radial shells up to
/// the Nyquist radius `N/2`.
pub fn fsc<T: Real>(v1: &VolumeGrid<T>, v2: &VolumeGrid<T>, shells: usize) -> Result<FscCurve> {
    if v1.n() != v2.n() {
        return Err(Error::shape("fsc volumes", v1.n(), v2.n()));
    }
    if shells == 0 {
        return Err(Error::InvalidArgument("fsc needs at least one shell".into()));
    }
    let n = v1.n();
    let mut planner = FftPlanner::new();
    let (f1, f2) = (fft3(v1, &mut planner), fft3(v2, &mut planner));
    let width = (n as f64 / 2.0) / shells as f64;
    let mut cross = vec![0.0; shells];
    let mut e1 = vec![0.0; shells];
    let mut e2 = vec![0.0; shells];
    let mut counts = vec![0usize; shells];
    let signed = |i: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let r = (signed(x).powi(2) + signed(y).powi(2) + signed(z).powi(2)).sqrt();
                let s = (r / width + 0.5).floor() as usize;
                if s >= shells {
                    continue;
                }
                let i = (z * n + y) * n + x;
                let (a, b) = (f1[i], f2[i]);
                cross[s] += (a * b.conj()).re;
                e1[s] += a.norm_sqr();
                e2[s] += b.norm_sqr();
                counts[s] += 1;
            }
        }
    }
    let mut correlation = Vec::with_capacity(shells);
    let mut degenerate = Vec::with_capacity(shells);
    for s in 0..shells {
        let denom = (e1[s] * e2[s]).sqrt();
        if counts[s] == 0 || denom == 0.0 {
            correlation.push(0.0);
            degenerate.push(true);
        } else {
            correlation.push((cross[s] / denom).clamp(-1.0, 1.0));
            degenerate.push(false);
        }
    }
    // index k of an N-point transform over length 2 is k / 2 cycles per unit
    let frequencies = (0..shells).map(|s| s as f64 * width / 2.0).collect();
    Ok(FscCurve {
        frequencies,
        correlation,
        counts,
        degenerate,
    })
}

/// First frequency where the curve drops below `t`, interpolated linearly
/// between shells; `+inf` if it never does. Degenerate shells are skipped.
pub fn resolution_at_threshold(curve: &FscCurve, t: f64) -> f64 {
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..curve.len() {
        if curve.degenerate[i] {
            continue;
        }
        let (f, c) = (curve.frequencies[i], curve.correlation[i]);
        if c < t {
            return match prev {
                Some((pf, pc)) => pf + (pc - t) / (pc - c) * (f - pf),
                None => f,
            };
        }
        prev = Some((f, c));
    }
    f64::INFINITY
}

/// Voxel shift `d` (x, y, z) maximizing the correlation of
/// `est(x - d)` (zero padded) with `reference`, searched over `±N/8`.
pub fn best_shift<T: Real>(est: &VolumeGrid<T>, reference: &VolumeGrid<T>) -> Result<[isize; 3]> {
    if est.n() != reference.n() {
        return Err(Error::shape("register_volumes", reference.n(), est.n()));
    }
    let n = est.n() as isize;
    let r = n / 8;
    let e: Vec<f64> = est.data().iter().map(|v| v.as_f64()).collect();
    let f: Vec<f64> = reference.data().iter().map(|v| v.as_f64()).collect();
    let total = (n * n * n) as f64;
    let (_, vf) = mean_var(f.iter().copied());
    let mf = f.iter().sum::<f64>() / total;
    let idx = |x: isize, y: isize, z: isize| ((z * n + y) * n + x) as usize;
    let score = |d: [isize; 3]| -> f64 {
        let (mut sum, mut sq, mut dot) = (0.0, 0.0, 0.0);
        let lo = |k: usize| d[k].max(0);
        let hi = |k: usize| (n + d[k]).min(n);
        for z in lo(2)..hi(2) {
            for y in lo(1)..hi(1) {
                let src = idx(lo(0) - d[0], y - d[1], z - d[2]);
                let dst = idx(lo(0), y, z);
                let len = (hi(0) - lo(0)).max(0) as usize;
                for k in 0..len {
                    let a = e[src + k];
                    sum += a;
                    sq += a * a;
                    dot += a * f[dst + k];
                }
            }
        }
        let ma = sum / total;
        let va = sq / total - ma * ma;
        if va <= 0.0 || vf <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (dot / total - ma * mf) / (va * vf).sqrt()
    };
    let mut best = ([0isize; 3], score([0, 0, 0]));
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let s = score([dx, dy, dz]);
                if s > best.1 {
                    best = ([dx, dy, dz], s);
                }
            }
        }
    }
    Ok(best.0)
}

/// `vol(x - d)` with zero padding.
pub fn shift_volume<T: Real>(vol: &VolumeGrid<T>, d: [isize; 3]) -> VolumeGrid<T> {
    let n = vol.n() as isize;
    let mut out = VolumeGrid::zeros(vol.n());
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let (sx, sy, sz) = (x - d[0], y - d[1], z - d[2]);
                if (0..n).contains(&sx) && (0..n).contains(&sy) && (0..n).contains(&sz) {
                    let i = out.index(x as usize, y as usize, z as usize);
                    out.data_mut()[i] = vol.get(sx as usize, sy as usize, sz as usize);
                }
            }
        }
    }
    out
}

/// Translates `est` onto `reference`; returns the shifted volume and the
/// applied shift.
pub fn register_volumes<T: Real>(est: &VolumeGrid<T>, reference: &VolumeGrid<T>) -> Result<(VolumeGrid<T>, [isize; 3])> {
    let d = best_shift(est, reference)?;
    Ok((shift_volume(est, d), d))
}

/// Table-1 error columns for one method.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeformationErrors {
    pub shift_px: f64,
    pub rot_deg: f64,
    pub local_px: f64,
    pub warp_px: f64,
}

/// Local displacement on the `n x n` pixel centers, normalized units.
pub fn dense_displacement<T: Real>(local: &LocalWarp<T>, n: usize) -> Vec<[T; 2]> {
    let coords: Vec<[T; 2]> = (0..n * n)
        .map(|i| [cell_center(i % n, n), cell_center(i / n, n)])
        .collect();
    match local {
        LocalWarp::Net(net) => {
            let flat: Vec<T> = coords.iter().flatten().copied().collect();
            let out = net.eval_batch(&flat).expect("2D warp network");
            out.outer_iter().map(|r| [r[0], r[1]]).collect()
        }
        other => coords.iter().map(|&x| other.displacement(x)).collect(),
    }
}

/// Mean errors of `est` against `truth` on the `n x n` pixel grid.
pub fn deformation_errors<T: Real>(
    truth: &DeformationParams<T>,
    est: &DeformationParams<T>,
    n: usize,
) -> Result<DeformationErrors> {
    if truth.len() != est.len() {
        return Err(Error::shape("deformation_errors", truth.len(), est.len()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no tilts to compare".into()));
    }
    let ppu: f64 = pixels_per_unit(n);
    let m = truth.len() as f64;
    let mut out = DeformationErrors::default();
    for (t, e) in truth.tilts.iter().zip(&est.tilts) {
        let dt = [
            (e.global.tau[0] - t.global.tau[0]).as_f64(),
            (e.global.tau[1] - t.global.tau[1]).as_f64(),
        ];
        out.shift_px += dt[0].hypot(dt[1]) * ppu / m;
        out.rot_deg += (e.global.alpha_deg - t.global.alpha_deg).as_f64().abs() / m;
        let lt = dense_displacement(&t.local, n);
        let le = dense_displacement(&e.local, n);
        let per_point = m * (n * n) as f64;
        for (i, (a, b)) in lt.iter().zip(&le).enumerate() {
            let x = [cell_center::<T>(i % n, n), cell_center(i / n, n)];
            let dl = [(b[0] - a[0]).as_f64(), (b[1] - a[1]).as_f64()];
            out.local_px += dl[0].hypot(dl[1]) * ppu / per_point;
            let wt = warp_coords(&t.global, *a, x);
            let we = warp_coords(&e.global, *b, x);
            let dw = [(we[0] - wt[0]).as_f64(), (we[1] - wt[1]).as_f64()];
            out.warp_px += dw[0].hypot(dw[1]) * ppu / per_point;
        }
    }
    Ok(out)
}

/// One Table-1 row.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub errors: DeformationErrors,
    pub proj_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<MethodRow>,
}

impl MetricsReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::{sample_random_deformations, RandomDeformationConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> VolumeGrid<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VolumeGrid::from_fn(n, |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn snr_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<f64> = (0..20000).map(|i| (i as f64 * 0.01).sin()).collect();
        let (_, var) = mean_var(s.iter().copied());
        for target in [0.0, 10.0] {
            let sd = (var * 10f64.powf(-target / 10.0)).sqrt();
            let noisy: Vec<f64> = s
                .iter()
                .map(|v| v + sd * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            assert!((snr_db(&noisy, &s).unwrap() - target).abs() < 0.2);
        }
        assert_eq!(snr_db(&s, &s).unwrap(), f64::INFINITY);
    }

    #[test]
    fn fsc_identity_and_negation() {
        let v = noise(16, 2);
        let c = fsc(&v, &v, 8).unwrap();
        assert!(c.correlation.iter().all(|&x| (x - 1.0).abs() < 1e-9));
        let neg = v.map(|x| -x);
        let c = fsc(&v, &neg, 8).unwrap();
        assert!(c.correlation.iter().all(|&x| (x + 1.0).abs() < 1e-9));
    }

    #[test]
    fn fft3_matches_direct_dft() {
        let n = 4;
        let v = noise(n, 3);
        let f = fft3(&v, &mut FftPlanner::new());
        let k = [1usize, 3, 2];
        let mut direct = Complex::new(0.0, 0.0);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let ph = -2.0 * std::f64::consts::PI * ((k[0] * x + k[1] * y + k[2] * z) as f64) / n as f64;
                    direct += Complex::from_polar(v.get(x, y, z), ph);
                }
            }
        }
        let got = f[(k[2] * n + k[1]) * n + k[0]];
        assert!((got - direct).norm() < 1e-10);
    }

    #[test]
    fn resolution_interpolates() {
        let curve = FscCurve {
            frequencies: (0..11).map(|i| i as f64).collect(),
            correlation: (0..11).map(|i| 1.0 - i as f64 / 10.0).collect(),
            counts: vec![1; 11],
            degenerate: vec![false; 11],
        };
        // strict crossing below 0.5 happens between shells 5 and 6
        let r = resolution_at_threshold(&curve, 0.55);
        assert!((r - 4.5).abs() < 1e-12);
        assert!(resolution_at_threshold(&curve, 0.143) > r);
        let flat = FscCurve {
            correlation: vec![1.0; 11],
            ..curve
        };
        assert_eq!(resolution_at_threshold(&flat, 0.5), f64::INFINITY);
    }

    #[test]
    fn registration_recovers_shift() {
        let n = 24;
        let v = VolumeGrid::<f64>::from_fn(n, |p| (-((p[0] - 0.1).powi(2) + p[1].powi(2) + (p[2] + 0.2).powi(2)) / 0.05).exp());
        let moved = shift_volume(&v, [3, 0, 0]);
        let (back, d) = register_volumes(&moved, &v).unwrap();
        assert_eq!(d, [-3, 0, 0]);
        assert!(ncc(back.data(), v.data()) >= ncc(moved.data(), v.data()));
        assert_eq!(register_volumes(&v, &v).unwrap().1, [0, 0, 0]);
    }

    #[test]
    fn errors_of_truth_are_zero_and_identity_gives_magnitudes() {
        let n = 16;
        let truth = sample_random_deformations::<f64>(4, n, &RandomDeformationConfig::default(), 8).unwrap();
        let e = deformation_errors(&truth, &truth, n).unwrap();
        assert_eq!(e, DeformationErrors::default());
        let id = DeformationParams::identity(4);
        let e = deformation_errors(&truth, &id, n).unwrap();
        let mean_shift = truth
            .tilts
            .iter()
            .map(|t| t.global.tau[0].hypot(t.global.tau[1]) * 8.0)
            .sum::<f64>()
            / 4.0;
        assert!((e.shift_px - mean_shift).abs() < 1e-12);
    }
}
