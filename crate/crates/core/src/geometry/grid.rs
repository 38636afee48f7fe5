use crate::error::{Error, Result};
use crate::real::Real;

/// Center of cell `i` on an `n`-cell lattice spanning `[-1, 1]`.
#[inline]
pub fn cell_center<T: Real>(i: usize, n: usize) -> T {
    T::lit(-1.0) + (T::from_usize_(i) + T::lit(0.5)) * T::lit(2.0) / T::from_usize_(n)
}

/// Continuous index of coordinate `x`: cell centers map to integers.
#[inline]
pub fn continuous_index<T: Real>(x: T, n: usize) -> T {
    (x + T::one()) * T::from_usize_(n) * T::lit(0.5) - T::lit(0.5)
}

/// Integer base and fractional weight of a continuous index. Fractions
/// within 1e-9 of a node snap to it so lattice points interpolate exactly.
#[inline]
pub(crate) fn split_index<T: Real>(ci: T) -> (isize, T) {
    let snap = T::lit(1e-9);
    let fl = ci.floor();
    let frac = ci - fl;
    let base = fl.to_isize().unwrap_or(-2);
    if frac < snap {
        (base, T::zero())
    } else if frac > T::one() - snap {
        (base + 1, T::zero())
    } else {
        (base, frac)
    }
}

/// Trilinear corners of `p` on an `n^3` lattice as `(flat_index, weight)`,
/// skipping corners outside the lattice.
#[inline]
pub fn trilinear_corners<T: Real>(n: usize, p: [T; 3], mut f: impl FnMut(usize, T)) {
    let one = T::one();
    if p.iter().any(|&c| !(c >= -one && c <= one)) {
        return;
    }
    let ni = n as isize;
    let mut base = [0isize; 3];
    let mut frac = [T::zero(); 3];
    for a in 0..3 {
        (base[a], frac[a]) = split_index(continuous_index(p[a], n));
    }
    for dz in 0..2 {
        let z = base[2] + dz;
        if z < 0 || z >= ni {
            continue;
        }
        let wz = if dz == 0 { one - frac[2] } else { frac[2] };
        for dy in 0..2 {
            let y = base[1] + dy;
            if y < 0 || y >= ni {
                continue;
            }
            let wy = if dy == 0 { one - frac[1] } else { frac[1] };
            for dx in 0..2 {
                let x = base[0] + dx;
                if x < 0 || x >= ni {
                    continue;
                }
                let wx = if dx == 0 { one - frac[0] } else { frac[0] };
                f(((z * ni + y) * ni + x) as usize, wx * wy * wz);
            }
        }
    }
}

/// Cubic density grid, index order `(z, y, x)` with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> VolumeGrid<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n * n {
            return Err(Error::shape("VolumeGrid", n * n * n, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("volume values must be finite".into()));
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut([T; 3]) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n * n);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    data.push(f([cell_center(x, n), cell_center(y, n), cell_center(z, n)]));
                }
            }
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Voxel spacing in normalized units.
    pub fn spacing(&self) -> T {
        T::lit(2.0) / T::from_usize_(self.n)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.n + y) * self.n + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    /// Trilinear interpolation at a point `(x, y, z)` with zero padding.
    pub fn sample(&self, p: [T; 3]) -> T {
        let one = T::one();
        if p.iter().any(|&c| !(c >= -one && c <= one)) {
            return T::zero();
        }
        let mut acc = T::zero();
        self.for_each_corner(p, |idx, w| acc += w * self.data[idx]);
        acc
    }

    /// Calls `f(flat_index, weight)` for each in-range trilinear corner of
    /// `p`. Points outside the cube have no corners.
    #[inline]
    pub fn for_each_corner(&self, p: [T; 3], f: impl FnMut(usize, T)) {
        trilinear_corners(self.n, p, f)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> VolumeGrid<U> {
        VolumeGrid {
            n: self.n,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Square detector image, row index `v` (tilt axis, y) and column `u` (x).
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::shape("Image", n * n, data.len()));
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut([T; 2]) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for v in 0..n {
            for u in 0..n {
                data.push(f([cell_center(u, n), cell_center(v, n)]));
            }
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.n + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.n + u] = value;
    }

    /// Bilinear interpolation at `(x, y)` with zero padding outside `[-1, 1]^2`.
    pub fn sample(&self, p: [T; 2]) -> T {
        let one = T::one();
        if p.iter().any(|&c| !(c >= -one && c <= one)) {
            return T::zero();
        }
        let n = self.n as isize;
        let cx = continuous_index(p[0], self.n);
        let cy = continuous_index(p[1], self.n);
        let (x0, ax) = split_index(cx);
        let (y0, ay) = split_index(cy);
        let mut acc = T::zero();
        for dy in 0..2 {
            let y = y0 + dy;
            if y < 0 || y >= n {
                continue;
            }
            let wy = if dy == 0 { one - ay } else { ay };
            for dx in 0..2 {
                let x = x0 + dx;
                if x < 0 || x >= n {
                    continue;
                }
                let wx = if dx == 0 { one - ax } else { ax };
                let w = wx * wy;
                if w != T::zero() {
                    acc += w * self.get(x as usize, y as usize);
                }
            }
        }
        acc
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            n: self.n,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_values_are_reproduced() {
        let v = VolumeGrid::<f64>::from_fn(6, |p| p[0] * 3.0 + p[1] * p[2]);
        for (x, y, z) in [(0, 0, 0), (2, 5, 1), (5, 3, 4)] {
            let p = [cell_center(x, 6), cell_center(y, 6), cell_center(z, 6)];
            assert_eq!(v.sample(p), v.get(x, y, z));
        }
    }

    #[test]
    fn outside_cube_is_zero() {
        let v = VolumeGrid::<f64>::from_fn(4, |_| 1.0);
        assert_eq!(v.sample([1.01, 0.0, 0.0]), 0.0);
        assert_eq!(v.sample([0.0, -3.0, 0.0]), 0.0);
    }

    #[test]
    fn midpoint_is_mean() {
        let mut v = VolumeGrid::<f64>::zeros(4);
        let (a, b) = (v.index(1, 2, 2), v.index(2, 2, 2));
        v.data_mut()[a] = 2.0;
        v.data_mut()[b] = 5.0;
        let x = 0.5 * (cell_center::<f64>(1, 4) + cell_center::<f64>(2, 4));
        let p = [x, cell_center(2, 4), cell_center(2, 4)];
        assert!((v.sample(p) - 3.5).abs() < 1e-15);
    }

    #[test]
    fn image_bilinear_nodes_and_padding() {
        let img = Image::<f64>::from_fn(5, |p| p[0] - 2.0 * p[1]);
        assert_eq!(img.sample([cell_center(3, 5), cell_center(1, 5)]), img.get(3, 1));
        assert_eq!(img.sample([-1.5, 0.0]), 0.0);
    }
}
