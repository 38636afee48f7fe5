//! Scalar reverse-mode differentiation over a recorded tape.
//!
//! Every operation pushes a node holding up to two parent indices together
//! with the local partial derivatives, so the backward sweep is a single
//! reverse pass over the node list.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy)]
struct Node<T> {
    parents: [(usize, T); 2],
    arity: u8,
}

/// Operation recorder. Variables borrow the tape they live on.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    idx: usize,
    value: T,
}

impl<T: std::fmt::Debug> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.idx, self.value)
    }
}

/// Elementwise unary primitives accepted by [`Tape::unary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Sin,
    Cos,
    Relu,
    Softplus,
    Neg,
    Square,
}

impl std::str::FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sin" => Primitive::Sin,
            "cos" => Primitive::Cos,
            "relu" => Primitive::Relu,
            "softplus" => Primitive::Softplus,
            "neg" => Primitive::Neg,
            "square" => Primitive::Square,
            other => return Err(Error::UnsupportedPrimitive(other.to_string())),
        })
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: T, parents: [(usize, T); 2], arity: u8) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, arity });
        Var {
            tape: self,
            idx: nodes.len() - 1,
            value,
        }
    }

    /// Leaf variable (parameter or input).
    pub fn var(&self, value: T) -> Var<'_, T> {
        self.push(value, [(0, T::zero()); 2], 0)
    }

    /// Leaf that is never differentiated against; numerically identical to
    /// [`Tape::var`].
    pub fn constant(&self, value: T) -> Var<'_, T> {
        self.var(value)
    }

    /// Applies a primitive selected by name. Unknown names fail here, at
    /// graph construction time.
    pub fn unary<'t>(&'t self, op: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let op: Primitive = op.parse()?;
        Ok(x.apply(op))
    }

    /// Sum of many variables as a chain of binary adds.
    pub fn sum<'t>(&'t self, xs: impl IntoIterator<Item = Var<'t, T>>) -> Var<'t, T> {
        let mut acc = self.constant(T::zero());
        for x in xs {
            acc = acc + x;
        }
        acc
    }

    /// Reverse sweep from `output`; returns d(output)/d(node) for every node.
    pub fn gradient(&self, output: Var<'_, T>) -> Vec<T> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        adj[output.idx] = T::one();
        for i in (0..=output.idx).rev() {
            let a = adj[i];
            if a == T::zero() {
                continue;
            }
            let node = &nodes[i];
            for &(p, w) in &node.parents[..node.arity as usize] {
                adj[p] += a * w;
            }
        }
        adj
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn value(&self) -> T {
        self.value
    }

    pub fn index(&self) -> usize {
        self.idx
    }

    fn unary_node(self, value: T, partial: T) -> Self {
        self.tape.push(value, [(self.idx, partial), (0, T::zero())], 1)
    }

    pub fn apply(self, op: Primitive) -> Self {
        match op {
            Primitive::Sin => self.sin(),
            Primitive::Cos => self.cos(),
            Primitive::Relu => self.relu(),
            Primitive::Softplus => self.softplus(),
            Primitive::Neg => -self,
            Primitive::Square => self.square(),
        }
    }

    pub fn sin(self) -> Self {
        self.unary_node(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.unary_node(self.value.cos(), -self.value.sin())
    }

    pub fn relu(self) -> Self {
        if self.value > T::zero() {
            self.unary_node(self.value, T::one())
        } else {
            self.unary_node(T::zero(), T::zero())
        }
    }

    pub fn softplus(self) -> Self {
        self.unary_node(self.value.softplus(), self.value.sigmoid())
    }

    pub fn square(self) -> Self {
        self.unary_node(self.value * self.value, self.value + self.value)
    }

    pub fn scale(self, c: T) -> Self {
        self.unary_node(self.value * c, c)
    }

    pub fn offset(self, c: T) -> Self {
        self.unary_node(self.value + c, T::one())
    }
}

impl<'t, T: Real> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.tape.push(
            self.value + rhs.value,
            [(self.idx, T::one()), (rhs.idx, T::one())],
            2,
        )
    }
}

impl<'t, T: Real> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.tape.push(
            self.value - rhs.value,
            [(self.idx, T::one()), (rhs.idx, -T::one())],
            2,
        )
    }
}

impl<'t, T: Real> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.tape.push(
            self.value * rhs.value,
            [(self.idx, rhs.value), (rhs.idx, self.value)],
            2,
        )
    }
}

impl<'t, T: Real> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::<f64>::new();
        let w = tape.var(3.0);
        let y = w * w;
        let g = tape.gradient(y);
        assert_eq!(y.value(), 9.0);
        assert_eq!(g[w.index()], 6.0);
        assert_eq!(g[y.index()], 1.0);
    }

    #[test]
    fn reused_variable_accumulates() {
        // f = sin(x) * x + x
        let tape = Tape::<f64>::new();
        let x = tape.var(0.4);
        let y = x.sin() * x + x;
        let g = tape.gradient(y);
        let expected = 0.4f64.cos() * 0.4 + 0.4f64.sin() + 1.0;
        assert!((g[x.index()] - expected).abs() < 1e-15);
    }

    #[test]
    fn unknown_primitive_is_rejected_at_construction() {
        let tape = Tape::<f64>::new();
        let x = tape.var(1.0);
        assert!(matches!(
            tape.unary("tanh", x),
            Err(Error::UnsupportedPrimitive(name)) if name == "tanh"
        ));
        assert!(tape.unary("relu", x).is_ok());
    }
}
