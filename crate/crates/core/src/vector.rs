//! Finite-dimensional complex vectors with a selectable norm.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Which norm a [`VectorValue`] is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// max_i |v_i|
    #[default]
    Sup,
    /// sqrt(sum_i |v_i|^2)
    Euclidean,
}

impl NormKind {
    pub fn of(self, v: &[Complex64]) -> f64 {
        match self {
            NormKind::Sup => v.iter().fold(0.0_f64, |m, c| m.max(c.norm())),
            NormKind::Euclidean => v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
        }
    }
}

/// An element of C^d.
///
/// Arithmetic between two values keeps the norm kind of the left operand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorValue {
    pub components: Vec<Complex64>,
    #[serde(default)]
    pub norm: NormKind,
}

impl VectorValue {
    pub fn new(components: Vec<Complex64>) -> Self {
        Self { components, norm: NormKind::Sup }
    }

    pub fn with_norm(components: Vec<Complex64>, norm: NormKind) -> Self {
        Self { components, norm }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); dim])
    }

    pub fn scalar(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    pub fn real(x: f64) -> Self {
        Self::scalar(Complex64::new(x, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn norm_value(&self) -> f64 {
        self.norm.of(&self.components)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::with_norm(self.components.iter().map(|c| c * s).collect(), self.norm)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self::with_norm(self.components.iter().map(|c| c * s).collect(), self.norm)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: Complex64, other: &VectorValue) {
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            *a += s * b;
        }
    }

    /// Norm of `self - other`, in the norm of `self`.
    pub fn distance(&self, other: &VectorValue) -> f64 {
        let diff: Vec<Complex64> =
            self.components.iter().zip(&other.components).map(|(a, b)| a - b).collect();
        self.norm.of(&diff)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::with_norm(self.components.iter().map(|&c| f(c)).collect(), self.norm)
    }

    /// Componentwise product.
    pub fn hadamard(&self, other: &VectorValue) -> Self {
        Self::with_norm(
            self.components.iter().zip(&other.components).map(|(a, b)| a * b).collect(),
            self.norm,
        )
    }
}

impl Add<&VectorValue> for &VectorValue {
    type Output = VectorValue;
    fn add(self, rhs: &VectorValue) -> VectorValue {
        VectorValue::with_norm(
            self.components.iter().zip(&rhs.components).map(|(a, b)| a + b).collect(),
            self.norm,
        )
    }
}

impl Add for VectorValue {
    type Output = VectorValue;
    fn add(self, rhs: VectorValue) -> VectorValue {
        &self + &rhs
    }
}

impl Sub<&VectorValue> for &VectorValue {
    type Output = VectorValue;
    fn sub(self, rhs: &VectorValue) -> VectorValue {
        VectorValue::with_norm(
            self.components.iter().zip(&rhs.components).map(|(a, b)| a - b).collect(),
            self.norm,
        )
    }
}

impl Sub for VectorValue {
    type Output = VectorValue;
    fn sub(self, rhs: VectorValue) -> VectorValue {
        &self - &rhs
    }
}

impl AddAssign<&VectorValue> for VectorValue {
    fn add_assign(&mut self, rhs: &VectorValue) {
        for (a, b) in self.components.iter_mut().zip(&rhs.components) {
            *a += b;
        }
    }
}

impl SubAssign<&VectorValue> for VectorValue {
    fn sub_assign(&mut self, rhs: &VectorValue) {
        for (a, b) in self.components.iter_mut().zip(&rhs.components) {
            *a -= b;
        }
    }
}

impl Neg for VectorValue {
    type Output = VectorValue;
    fn neg(self) -> VectorValue {
        self.map(|c| -c)
    }
}

impl Mul<Complex64> for &VectorValue {
    type Output = VectorValue;
    fn mul(self, rhs: Complex64) -> VectorValue {
        self.scale(rhs)
    }
}

impl Mul<f64> for &VectorValue {
    type Output = VectorValue;
    fn mul(self, rhs: f64) -> VectorValue {
        self.scale_real(rhs)
    }
}

/// Serialized form `[re, im]` used by the JSON formats.
pub mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [c.re, c.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

/// Serialized form `[[re, im], ...]` for vectors.
pub mod complex_list {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

/// Serialized form `[[[re, im], ...], ...]` for lists of vectors.
pub mod complex_lists {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<Complex64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|c| c.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Complex64>>, D::Error> {
        let raw = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        Ok(raw.into_iter().map(|c| c.into_iter().map(|[a, b]| Complex64::new(a, b)).collect()).collect())
    }
}
