//! Dense row-major tensors over `f64` or `Complex64`.
//!
//! Tensors are plain immutable values; gradient tracking lives on the
//! [`Tape`](crate::autograd::Tape), which hands out [`Var`](crate::autograd::Var)
//! handles. That keeps `Tensor` `Send + Sync` so batches can move freely
//! between threads.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Real,
    Complex,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    storage: Storage,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn real(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(contract(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            storage: Storage::Real(data),
        })
    }

    pub fn complex(shape: &[usize], data: Vec<Complex64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(contract(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            storage: Storage::Complex(data),
        })
    }

    pub fn zeros(shape: &[usize], dtype: Dtype) -> Self {
        let n = numel(shape);
        let storage = match dtype {
            Dtype::Real => Storage::Real(vec![0.0; n]),
            Dtype::Complex => Storage::Complex(vec![Complex64::new(0.0, 0.0); n]),
        };
        Self {
            shape: shape.to_vec(),
            storage,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            storage: Storage::Real(vec![value; numel(shape)]),
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            storage: Storage::Real(vec![value]),
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        Self {
            shape: shape.to_vec(),
            storage: Storage::Real((0..numel(shape)).map(&mut f).collect()),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Real(v) => v.len(),
            Storage::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self.storage {
            Storage::Real(_) => Dtype::Real,
            Storage::Complex(_) => Dtype::Complex,
        }
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_scalar(&self) -> bool {
        self.len() == 1
    }

    pub fn as_real(&self) -> Result<&[f64]> {
        match &self.storage {
            Storage::Real(v) => Ok(v),
            Storage::Complex(_) => Err(Error::Dtype {
                op: "as_real",
                expected: "real",
            }),
        }
    }

    pub fn as_complex(&self) -> Result<&[Complex64]> {
        match &self.storage {
            Storage::Complex(v) => Ok(v),
            Storage::Real(_) => Err(Error::Dtype {
                op: "as_complex",
                expected: "complex",
            }),
        }
    }

    pub fn as_real_mut(&mut self) -> Result<&mut [f64]> {
        match &mut self.storage {
            Storage::Real(v) => Ok(v),
            Storage::Complex(_) => Err(Error::Dtype {
                op: "as_real_mut",
                expected: "real",
            }),
        }
    }

    pub fn as_complex_mut(&mut self) -> Result<&mut [Complex64]> {
        match &mut self.storage {
            Storage::Complex(v) => Ok(v),
            Storage::Real(_) => Err(Error::Dtype {
                op: "as_complex_mut",
                expected: "complex",
            }),
        }
    }

    pub fn into_real(self) -> Result<Vec<f64>> {
        match self.storage {
            Storage::Real(v) => Ok(v),
            Storage::Complex(_) => Err(Error::Dtype {
                op: "into_real",
                expected: "real",
            }),
        }
    }

    pub fn into_complex(self) -> Result<Vec<Complex64>> {
        match self.storage {
            Storage::Complex(v) => Ok(v),
            Storage::Real(_) => Err(Error::Dtype {
                op: "into_complex",
                expected: "complex",
            }),
        }
    }

    /// The single value of a one-element real tensor.
    pub fn item(&self) -> Result<f64> {
        let v = self.as_real()?;
        if v.len() != 1 {
            return Err(contract(format!("item() on tensor of shape {:?}", self.shape)));
        }
        Ok(v[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            storage: self.storage.clone(),
        })
    }

    pub fn to_complex(&self) -> Self {
        match &self.storage {
            Storage::Complex(_) => self.clone(),
            Storage::Real(v) => Self {
                shape: self.shape.clone(),
                storage: Storage::Complex(v.iter().map(|&x| Complex64::new(x, 0.0)).collect()),
            },
        }
    }

    /// Real part of a complex tensor. Real tensors are rejected so that
    /// dtype changes are always explicit.
    pub fn real_part(&self) -> Result<Self> {
        let v = self.as_complex()?;
        Ok(Self {
            shape: self.shape.clone(),
            storage: Storage::Real(v.iter().map(|z| z.re).collect()),
        })
    }

    pub fn imag_part(&self) -> Result<Self> {
        let v = self.as_complex()?;
        Ok(Self {
            shape: self.shape.clone(),
            storage: Storage::Real(v.iter().map(|z| z.im).collect()),
        })
    }

    pub fn conj(&self) -> Self {
        match &self.storage {
            Storage::Real(_) => self.clone(),
            Storage::Complex(v) => Self {
                shape: self.shape.clone(),
                storage: Storage::Complex(v.iter().map(|z| z.conj()).collect()),
            },
        }
    }

    /// Sum of squared magnitudes.
    pub fn norm_sq(&self) -> f64 {
        match &self.storage {
            Storage::Real(v) => v.iter().map(|x| x * x).sum(),
            Storage::Complex(v) => v.iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        match &self.storage {
            Storage::Real(v) => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Storage::Complex(v) => v.iter().fold(0.0, |m, z| m.max(z.norm())),
        }
    }

    pub fn all_finite(&self) -> bool {
        match &self.storage {
            Storage::Real(v) => v.iter().all(|x| x.is_finite()),
            Storage::Complex(v) => v.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// Largest elementwise distance `|a - b|`. Real and complex operands may
    /// be mixed; real values are treated as having zero imaginary part.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        let out = match (&self.storage, &other.storage) {
            (Storage::Real(a), Storage::Real(b)) => {
                a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
            }
            (Storage::Complex(a), Storage::Complex(b)) => {
                a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()))
            }
            (Storage::Real(a), Storage::Complex(b)) | (Storage::Complex(b), Storage::Real(a)) => a
                .iter()
                .zip(b)
                .fold(0.0_f64, |m, (x, y)| m.max((Complex64::new(*x, 0.0) - y).norm())),
        };
        Ok(out)
    }

    /// `‖a − b‖₂ / ‖b‖₂`, falling back to the absolute distance when `b` is zero.
    pub fn rel_l2_to(&self, reference: &Self) -> Result<f64> {
        let diff = self.sub(reference)?;
        let denom = reference.norm();
        Ok(if denom == 0.0 {
            diff.norm()
        } else {
            diff.norm() / denom
        })
    }

    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let v = self.as_real()?;
        Ok(Self {
            shape: self.shape.clone(),
            storage: Storage::Real(v.iter().map(|&x| f(x)).collect()),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, "mul", |a, b| a * b, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        match &self.storage {
            Storage::Real(v) => Self {
                shape: self.shape.clone(),
                storage: Storage::Real(v.iter().map(|x| x * c).collect()),
            },
            Storage::Complex(v) => Self {
                shape: self.shape.clone(),
                storage: Storage::Complex(v.iter().map(|x| x * c).collect()),
            },
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        match (&mut self.storage, &other.storage) {
            (Storage::Real(a), Storage::Real(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            (Storage::Complex(a), Storage::Complex(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y)
            }
            _ => {
                return Err(Error::Dtype {
                    op: "add_assign",
                    expected: "matching dtype",
                })
            }
        }
        Ok(())
    }

    pub fn sum_real(&self) -> Result<f64> {
        Ok(self.as_real()?.iter().sum())
    }

    fn zip(
        &self,
        other: &Self,
        op: &'static str,
        fr: impl Fn(f64, f64) -> f64,
        fc: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.check_same_shape(other, op)?;
        let storage = match (&self.storage, &other.storage) {
            (Storage::Real(a), Storage::Real(b)) => {
                Storage::Real(a.iter().zip(b).map(|(&x, &y)| fr(x, y)).collect())
            }
            (Storage::Complex(a), Storage::Complex(b)) => {
                Storage::Complex(a.iter().zip(b).map(|(&x, &y)| fc(x, y)).collect())
            }
            _ => {
                return Err(Error::Dtype {
                    op,
                    expected: "matching dtype",
                })
            }
        };
        Ok(Self {
            shape: self.shape.clone(),
            storage,
        })
    }
}

/// Spatial discretisation of the unit torus: one or two axes, each with a
/// power-of-two number of points and spacing `1/N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    extents: Vec<usize>,
}

impl Grid {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(contract(format!(
                "grid must have 1 or 2 axes, got {}",
                extents.len()
            )));
        }
        for &n in extents {
            if n == 0 || !n.is_power_of_two() {
                return Err(Error::UnsupportedSize(n));
            }
        }
        Ok(Self {
            extents: extents.to_vec(),
        })
    }

    pub fn d1(n: usize) -> Result<Self> {
        Self::new(&[n])
    }

    pub fn d2(n1: usize, n2: usize) -> Result<Self> {
        Self::new(&[n1, n2])
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn points(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.extents.iter().map(|&n| 1.0 / n as f64).collect()
    }

    /// Grid recovered from the trailing `dims` axes of a field shape.
    pub fn from_field_shape(shape: &[usize], dims: usize) -> Result<Self> {
        if shape.len() < dims {
            return Err(contract(format!("shape {shape:?} has fewer than {dims} axes")));
        }
        Self::new(&shape[shape.len() - dims..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::real(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::real(&[2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.len(), 6);
        assert!(t.reshape(&[3, 3]).is_err());
        assert_eq!(t.reshape(&[6]).unwrap().shape(), &[6]);
    }

    #[test]
    fn complex_needs_explicit_real_part() {
        let t = Tensor::ones(&[3]).to_complex();
        assert!(t.as_real().is_err());
        assert_eq!(t.real_part().unwrap(), Tensor::ones(&[3]));
        assert!(Tensor::ones(&[3]).real_part().is_err());
    }

    #[test]
    fn grid_rejects_non_power_of_two() {
        assert_eq!(Grid::d1(12), Err(Error::UnsupportedSize(12)));
        assert!(Grid::new(&[4, 4, 4]).is_err());
        let g = Grid::d2(8, 16).unwrap();
        assert_eq!(g.points(), 128);
        assert_eq!(g.spacing(), vec![0.125, 0.0625]);
    }
}
