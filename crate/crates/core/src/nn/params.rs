use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Matrix<T>,
}

/// Named trainable matrices. Layers keep [`ParamId`]s into a store owned by
/// the enclosing model; the parameter count never changes after
/// construction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<T>) -> ParamId {
        self.params.push(Param { name: name.into(), value });
        ParamId(self.params.len() - 1)
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.insert(name, Matrix::zeros(rows, cols))
    }

    /// Glorot/Xavier uniform initialisation, `U(-a, a)` with
    /// `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let a = Float::sqrt(6.0 / (fan_in + fan_out).max(1) as f64);
        let data = (0..fan_in * fan_out).map(|_| T::lit(rng.gen_range(-a..=a))).collect();
        self.insert(name, Matrix::from_vec(fan_in, fan_out, data).unwrap())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Every parameter value, concatenated in insertion order.
    pub fn flatten_values(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.value.as_slice().iter().copied()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|p| Param { name: p.name.clone(), value: p.value.cast() }).collect(),
        }
    }

    /// Overwrites values by name. Every parameter of `self` must be present
    /// in `source` with the same shape.
    pub fn load_from<U: Scalar>(&mut self, source: &[Param<U>]) -> Result<()> {
        for p in &mut self.params {
            let src =
                source.iter().find(|s| s.name == p.name).ok_or_else(|| Error::MissingParameter(p.name.clone()))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "parameter `{}`: expected {:?}, found {:?}",
                    p.name,
                    p.value.shape(),
                    src.value.shape()
                )));
            }
            p.value = src.value.cast();
        }
        Ok(())
    }
}

/// Per-parameter gradients, aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn empty(len: usize) -> Self {
        let mut grads = Vec::with_capacity(len);
        grads.resize_with(len, || None);
        Self { grads }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub(crate) fn accumulate_one(&mut self, id: ParamId, g: &Matrix<T>, scale: T) {
        match &mut self.grads[id.0] {
            Some(x) => {
                for (a, &b) in x.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *a += scale * b;
                }
            }
            slot @ None => {
                let mut m = g.clone();
                if scale != T::one() {
                    m.scale(scale);
                }
                *slot = Some(m);
            }
        }
    }

    /// `self += scale · other`
    pub fn accumulate(&mut self, other: &Self, scale: T) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize_with(other.grads.len(), || None);
        }
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate_one(ParamId(i), g, scale);
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in self.grads.iter_mut().flatten() {
            g.scale(s);
        }
    }

    pub fn norm(&self) -> T {
        self.grads.iter().flatten().flat_map(|g| g.as_slice().iter()).map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.all_finite())
    }

    /// Flattened gradient (zeros for untouched parameters), in store order.
    pub fn flatten(&self, store: &ParamStore<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(store.num_scalars());
        for id in store.ids() {
            match self.get(id) {
                Some(g) => out.extend_from_slice(g.as_slice()),
                None => out.extend(core::iter::repeat_n(T::zero(), store.get(id).len())),
            }
        }
        out
    }
}
