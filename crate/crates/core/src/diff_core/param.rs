use crate::error::{Error, Result};
use crate::real::Real;

/// Flat optimizable storage with a logical shape and an owner tag
/// (`"psi"`, `"gamma[3]"`, `"global[3]"`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<T> {
    values: Vec<T>,
    shape: Vec<usize>,
    tag: String,
}

impl<T: Real> ParamBlock<T> {
    pub fn new(values: Vec<T>, shape: Vec<usize>, tag: impl Into<String>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::shape("ParamBlock::new", expected, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "parameter values must be finite".into(),
            ));
        }
        Ok(Self {
            values,
            shape,
            tag: tag.into(),
        })
    }

    /// One-dimensional block.
    pub fn from_vec(values: Vec<T>, tag: impl Into<String>) -> Self {
        let n = values.len();
        Self::new(values, vec![n], tag).expect("finite values")
    }

    pub fn zeros(shape: Vec<usize>, tag: impl Into<String>) -> Self {
        let n = shape.iter().product();
        Self {
            values: vec![T::zero(); n],
            shape,
            tag: tag.into(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Mutable access for optimizers and checkpoint loading. Callers keep
    /// values finite.
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match() {
        assert!(ParamBlock::new(vec![0.0f64; 6], vec![2, 3], "psi").is_ok());
        assert!(matches!(
            ParamBlock::new(vec![0.0f64; 5], vec![2, 3], "psi"),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(ParamBlock::new(vec![f64::NAN], vec![1], "tau[0]").is_err());
    }
}
