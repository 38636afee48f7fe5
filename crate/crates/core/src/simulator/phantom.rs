use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::VolumeGrid;
use crate::io::read_mrc;
use crate::real::Real;
use crate::rng::{stream, stream_rng};

/// Every phantom is zero outside this half-width.
pub const SUPPORT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhantomKind {
    GaussianBlobs,
    SheppLogan3d,
    FromMrc(PathBuf),
}

impl PhantomKind {
    pub fn tag(&self) -> String {
        match self {
            PhantomKind::GaussianBlobs => "gaussian-blobs".into(),
            PhantomKind::SheppLogan3d => "shepp-logan-3d".into(),
            PhantomKind::FromMrc(p) => format!("from-mrc:{}", p.display()),
        }
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-blobs" => Ok(PhantomKind::GaussianBlobs),
            "shepp-logan-3d" => Ok(PhantomKind::SheppLogan3d),
            other => match other.strip_prefix("from-mrc:") {
                Some(p) if !p.is_empty() => Ok(PhantomKind::FromMrc(p.into())),
                _ => Err(Error::Config(format!("unknown phantom kind `{other}`"))),
            },
        }
    }
}

/// Isotropic Gaussian truncated at three standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub center: [f64; 3],
    pub sigma: f64,
    pub amplitude: f64,
}

impl Blob {
    pub fn value(&self, p: [f64; 3]) -> f64 {
        let r2: f64 = (0..3).map(|a| (p[a] - self.center[a]).powi(2)).sum();
        if r2 > 9.0 * self.sigma * self.sigma {
            0.0
        } else {
            self.amplitude * (-r2 / (2.0 * self.sigma * self.sigma)).exp()
        }
    }

    fn reach(&self) -> f64 {
        self.center.iter().map(|c| c.abs()).fold(0.0, f64::max) + 3.0 * self.sigma
    }
}

pub fn blobs_phantom<T: Real>(n: usize, blobs: &[Blob]) -> Result<VolumeGrid<T>> {
    if let Some(b) = blobs.iter().find(|b| b.reach() >= SUPPORT || b.amplitude < 0.0) {
        return Err(Error::InvalidArgument(format!("blob {b:?} leaves the support or is negative")));
    }
    Ok(VolumeGrid::from_fn(n, |p: [T; 3]| {
        let p = [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()];
        T::lit(blobs.iter().map(|b| b.value(p)).sum())
    }))
}

/// Random blob set: a few large bodies and many small ones, all within
/// radius 0.85 of the origin.
pub fn random_blobs(seed: u64) -> Vec<Blob> {
    let mut rng = stream_rng(seed, stream::PHANTOM, 0);
    let mut blobs = Vec::new();
    let count = 24;
    while blobs.len() < count {
        let sigma = if blobs.len() < 6 {
            rng.gen_range(0.08..0.14)
        } else {
            rng.gen_range(0.025..0.06)
        };
        let limit = 0.85 - 3.0 * sigma;
        let c: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        if r > 1.0 {
            continue;
        }
        let amplitude = rng.gen_range(0.4..1.0);
        blobs.push(Blob {
            center: [c[0] * limit, c[1] * limit, c[2] * limit],
            sigma,
            amplitude,
        });
    }
    blobs
}

/// `(semi-axes, center, rotation about z in degrees, additive intensity)`.
type Ellipsoid = ([f64; 3], [f64; 3], f64, f64);

// Three-dimensional Shepp-Logan with the higher-contrast intensities.
const SHEPP_LOGAN: [Ellipsoid; 10] = [
    ([0.69, 0.92, 0.81], [0.0, 0.0, 0.0], 0.0, 1.0),
    ([0.6624, 0.874, 0.78], [0.0, -0.0184, 0.0], 0.0, -0.8),
    ([0.11, 0.31, 0.22], [0.22, 0.0, 0.0], -18.0, -0.2),
    ([0.16, 0.41, 0.28], [-0.22, 0.0, 0.0], 18.0, -0.2),
    ([0.21, 0.25, 0.41], [0.0, 0.35, -0.15], 0.0, 0.1),
    ([0.046, 0.046, 0.05], [0.0, 0.1, 0.25], 0.0, 0.1),
    ([0.046, 0.046, 0.05], [0.0, -0.1, 0.25], 0.0, 0.1),
    ([0.046, 0.023, 0.05], [-0.08, -0.605, 0.0], 0.0, 0.1),
    ([0.023, 0.023, 0.02], [0.0, -0.606, 0.0], 0.0, 0.1),
    ([0.023, 0.046, 0.02], [0.06, -0.605, 0.0], 0.0, 0.1),
];

const SHEPP_LOGAN_SCALE: f64 = 0.85;

pub fn shepp_logan<T: Real>(n: usize) -> VolumeGrid<T> {
    VolumeGrid::from_fn(n, |p: [T; 3]| {
        let p = [
            p[0].as_f64() / SHEPP_LOGAN_SCALE,
            p[1].as_f64() / SHEPP_LOGAN_SCALE,
            p[2].as_f64() / SHEPP_LOGAN_SCALE,
        ];
        let mut v = 0.0;
        for &(axes, c, phi, value) in &SHEPP_LOGAN {
            let (s, co) = phi.to_radians().sin_cos();
            let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            let x = d[0] * co + d[1] * s;
            let y = -d[0] * s + d[1] * co;
            let q = (x / axes[0]).powi(2) + (y / axes[1]).powi(2) + (d[2] / axes[2]).powi(2);
            if q <= 1.0 {
                v += value;
            }
        }
        T::lit(v.max(0.0))
    })
}

/// Loads a cubic MRC volume of edge `n`, clamps negatives to zero and clears
/// everything outside the support box.
pub fn phantom_from_mrc<T: Real>(path: &Path, n: usize) -> Result<VolumeGrid<T>> {
    let mrc = read_mrc(path)?;
    let [nx, ny, nz] = mrc.dims;
    if nx != ny || ny != nz {
        return Err(Error::Config(format!(
            "phantom {} is not cubic: {nx} x {ny} x {nz}",
            path.display()
        )));
    }
    if nx != n {
        return Err(Error::Config(format!(
            "phantom {} has edge {nx}, configured N is {n}",
            path.display()
        )));
    }
    let vol = VolumeGrid::from_vec(n, mrc.data.iter().map(|&v| T::lit(v as f64)).collect())?;
    let limit = T::lit(SUPPORT);
    let mut out = vol;
    let n = out.n();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let c = [x, y, z].map(|i| crate::geometry::cell_center::<T>(i, n).abs());
                let i = out.index(x, y, z);
                let v = &mut out.data_mut()[i];
                if c.iter().any(|&a| a >= limit) || !(*v > T::zero()) {
                    *v = T::zero();
                }
            }
        }
    }
    Ok(out)
}

pub fn generate_phantom<T: Real>(n: usize, kind: &PhantomKind, seed: u64) -> Result<VolumeGrid<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("phantom edge {n} < 2")));
    }
    match kind {
        PhantomKind::GaussianBlobs => blobs_phantom(n, &random_blobs(seed)),
        PhantomKind::SheppLogan3d => Ok(shepp_logan(n)),
        PhantomKind::FromMrc(path) => phantom_from_mrc(path, n),
    }
}
