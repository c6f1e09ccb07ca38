//! `−∇·(a∇u) = f` on the unit square with `u = 0` on the boundary.
//!
//! Cell-centred finite volumes: one unknown per cell, harmonic-mean face
//! transmissibilities, and a half-cell distance to the wall. The matrix is
//! symmetric positive definite and is solved by Jacobi-preconditioned CG.

use able_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{PdeError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DarcyConfig {
    /// Target `‖b − Au‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DarcyConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DarcySolution {
    pub u: Tensor,
    pub iterations: usize,
    /// True relative residual of the returned `u`.
    pub residual: f64,
}

fn harmonic(p: f64, q: f64) -> f64 {
    2.0 * p * q / (p + q)
}

/// The assembled five-point operator.
struct System {
    n1: usize,
    n2: usize,
    // tx[i][j]: face between (i-1, j) and (i, j), i in 0..=n1
    tx: Vec<f64>,
    // ty[i][j]: face between (i, j-1) and (i, j), j in 0..=n2
    ty: Vec<f64>,
    diag: Vec<f64>,
}

impl System {
    fn new(a: &[f64], n1: usize, n2: usize) -> Self {
        let (h1, h2) = (1.0 / n1 as f64, 1.0 / n2 as f64);
        let (rx, ry) = (h2 / h1, h1 / h2);
        let at = |i: usize, j: usize| a[i * n2 + j];
        let mut tx = vec![0.0; (n1 + 1) * n2];
        for i in 0..=n1 {
            for j in 0..n2 {
                tx[i * n2 + j] = rx * match (i, i == n1) {
                    (0, _) => 2.0 * at(0, j),
                    (_, true) => 2.0 * at(n1 - 1, j),
                    _ => harmonic(at(i - 1, j), at(i, j)),
                };
            }
        }
        let mut ty = vec![0.0; n1 * (n2 + 1)];
        for i in 0..n1 {
            for j in 0..=n2 {
                ty[i * (n2 + 1) + j] = ry * match (j, j == n2) {
                    (0, _) => 2.0 * at(i, 0),
                    (_, true) => 2.0 * at(i, n2 - 1),
                    _ => harmonic(at(i, j - 1), at(i, j)),
                };
            }
        }
        let mut diag = vec![0.0; n1 * n2];
        for i in 0..n1 {
            for j in 0..n2 {
                diag[i * n2 + j] =
                    tx[i * n2 + j] + tx[(i + 1) * n2 + j] + ty[i * (n2 + 1) + j] + ty[i * (n2 + 1) + j + 1];
            }
        }
        Self { n1, n2, tx, ty, diag }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let (n1, n2) = (self.n1, self.n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let c = i * n2 + j;
                let mut v = self.diag[c] * u[c];
                if i > 0 {
                    v -= self.tx[i * n2 + j] * u[c - n2];
                }
                if i + 1 < n1 {
                    v -= self.tx[(i + 1) * n2 + j] * u[c + n2];
                }
                if j > 0 {
                    v -= self.ty[i * (n2 + 1) + j] * u[c - 1];
                }
                if j + 1 < n2 {
                    v -= self.ty[i * (n2 + 1) + j + 1] * u[c + 1];
                }
                out[c] = v;
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

fn check_inputs(a: &Tensor, f: &Tensor) -> Result<(usize, usize)> {
    if a.ndim() != 2 || a.shape() != f.shape() {
        return Err(PdeError::Domain(format!(
            "coefficient {:?} and forcing {:?} must be matching 2D fields",
            a.shape(),
            f.shape()
        )));
    }
    let (n1, n2) = (a.shape()[0], a.shape()[1]);
    if n1 == 0 || n2 == 0 {
        return Err(PdeError::Domain("empty grid".into()));
    }
    if let Some(v) = a.as_real()?.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(PdeError::Domain(format!("coefficient must be positive and finite, found {v}")));
    }
    if f.as_real()?.iter().any(|v| !v.is_finite()) {
        return Err(PdeError::Domain("forcing is not finite".into()));
    }
    Ok((n1, n2))
}

fn rhs(f: &[f64], n1: usize, n2: usize) -> Vec<f64> {
    let area = 1.0 / (n1 * n2) as f64;
    f.iter().map(|v| v * area).collect()
}

/// Relative residual `‖b − A_h u‖ / ‖b‖`, assembled directly from the stencil.
pub fn darcy_residual(a: &Tensor, f: &Tensor, u: &Tensor) -> Result<f64> {
    let (n1, n2) = check_inputs(a, f)?;
    let (av, uv) = (a.as_real()?, u.as_real()?);
    let b = rhs(f.as_real()?, n1, n2);
    let (h1, h2) = (1.0 / n1 as f64, 1.0 / n2 as f64);
    let mut num = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            let c = i * n2 + j;
            let mut flux = 0.0;
            // (neighbour value, face coefficient, face length / centre distance)
            let neighbours = [
                (i > 0).then(|| (uv[c - n2], harmonic(av[c], av[c - n2]), h2 / h1)),
                (i + 1 < n1).then(|| (uv[c + n2], harmonic(av[c], av[c + n2]), h2 / h1)),
                (j > 0).then(|| (uv[c - 1], harmonic(av[c], av[c - 1]), h1 / h2)),
                (j + 1 < n2).then(|| (uv[c + 1], harmonic(av[c], av[c + 1]), h1 / h2)),
            ];
            let mut walls = 0.0;
            for nb in neighbours {
                match nb {
                    Some((v, t, r)) => flux += t * r * (uv[c] - v),
                    None => walls += 1.0,
                }
            }
            // each missing neighbour is a wall at half a cell
            let wall_x = (i == 0) as usize as f64 + (i + 1 == n1) as usize as f64;
            let wall_y = walls - wall_x;
            flux += 2.0 * av[c] * uv[c] * (wall_x * h2 / h1 + wall_y * h1 / h2);
            num += (b[c] - flux).powi(2);
        }
    }
    let den = dot(&b, &b).sqrt();
    Ok(if den == 0.0 { num.sqrt() } else { num.sqrt() / den })
}

/// Solve on the grid of `a`; `f` and `a` share shape `(N1, N2)`.
pub fn solve_darcy(a: &Tensor, f: &Tensor, cfg: &DarcyConfig) -> Result<DarcySolution> {
    let (n1, n2) = check_inputs(a, f)?;
    let n = n1 * n2;
    let b = rhs(f.as_real()?, n1, n2);
    let bnorm = dot(&b, &b).sqrt();
    if bnorm == 0.0 {
        return Ok(DarcySolution {
            u: Tensor::zeros(&[n1, n2], able_core::Dtype::Real),
            iterations: 0,
            residual: 0.0,
        });
    }
    let sys = System::new(a.as_real()?, n1, n2);
    let mut u = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&sys.diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    loop {
        if dot(&r, &r).sqrt() <= cfg.tol * bnorm {
            // recursive residuals drift; confirm against the true one
            sys.apply(&u, &mut q);
            r.iter_mut().zip(&b).zip(&q).for_each(|((r, b), q)| *r = b - q);
            if dot(&r, &r).sqrt() <= cfg.tol * bnorm {
                break;
            }
            z.iter_mut().zip(&r).zip(&sys.diag).for_each(|((z, r), d)| *z = r / d);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        if iterations >= cfg.max_iter {
            return Err(PdeError::SolverFailure {
                step: iterations,
                msg: format!(
                    "conjugate gradient stalled at relative residual {:e}",
                    dot(&r, &r).sqrt() / bnorm
                ),
            });
        }
        sys.apply(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            z[i] = r[i] / sys.diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        iterations += 1;
    }
    let u = Tensor::real(&[n1, n2], u)?;
    let residual = darcy_residual(a, f, &u)?;
    Ok(DarcySolution { u, iterations, residual })
}

/// Mean of the cells nearest the domain centre (four for even extents).
pub fn centre_value(u: &Tensor) -> Result<f64> {
    if u.ndim() != 2 {
        return Err(PdeError::Domain("expected a 2D field".into()));
    }
    let (n1, n2) = (u.shape()[0], u.shape()[1]);
    let rows: Vec<usize> = if n1 % 2 == 0 { vec![n1 / 2 - 1, n1 / 2] } else { vec![n1 / 2] };
    let cols: Vec<usize> = if n2 % 2 == 0 { vec![n2 / 2 - 1, n2 / 2] } else { vec![n2 / 2] };
    let v = u.as_real()?;
    let mut s = 0.0;
    for &i in &rows {
        for &j in &cols {
            s += v[i * n2 + j];
        }
    }
    Ok(s / (rows.len() * cols.len()) as f64)
}

/// Every `stride`-th cell along both axes, starting at `offset`.
pub fn subsample_2d(u: &Tensor, stride: usize, offset: usize) -> Result<Tensor> {
    if u.ndim() != 2 || stride == 0 {
        return Err(PdeError::Domain("expected a 2D field and a positive stride".into()));
    }
    let (n1, n2) = (u.shape()[0], u.shape()[1]);
    let v = u.as_real()?;
    let rows: Vec<usize> = (offset..n1).step_by(stride).collect();
    let cols: Vec<usize> = (offset..n2).step_by(stride).collect();
    let data = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| v[i * n2 + j]))
        .collect();
    Ok(Tensor::real(&[rows.len(), cols.len()], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> Tensor {
        Tensor::full(&[n, n], 1.0)
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let s = solve_darcy(&ones(8), &Tensor::full(&[8, 8], 0.0), &DarcyConfig::default()).unwrap();
        assert_eq!(s.u.max_abs(), 0.0);
    }

    #[test]
    fn single_cell_closed_form() {
        // four half-cell walls: 8a·u = f·h², h = 1
        let s = solve_darcy(&Tensor::full(&[1, 1], 2.0), &Tensor::full(&[1, 1], 1.0), &DarcyConfig::default()).unwrap();
        assert!((s.u.as_real().unwrap()[0] - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn converges_and_is_symmetric() {
        let n = 16;
        let s = solve_darcy(&ones(n), &ones(n), &DarcyConfig::default()).unwrap();
        assert!(s.residual < 1e-10);
        let u = s.u.as_real().unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((u[i * n + j] - u[j * n + i]).abs() < 1e-12);
                assert!((u[i * n + j] - u[(n - 1 - i) * n + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_coefficient() {
        let mut a = ones(4);
        a.as_real_mut().unwrap()[5] = 0.0;
        assert!(matches!(
            solve_darcy(&a, &ones(4), &DarcyConfig::default()),
            Err(PdeError::Domain(_))
        ));
    }

    #[test]
    fn iteration_cap_is_a_solver_failure() {
        let cfg = DarcyConfig { tol: 1e-10, max_iter: 2 };
        assert!(matches!(
            solve_darcy(&ones(32), &ones(32), &cfg),
            Err(PdeError::SolverFailure { .. })
        ));
    }

    #[test]
    fn centre_and_subsample() {
        let u = Tensor::from_fn(&[4, 4], |i| i as f64);
        assert_eq!(centre_value(&u).unwrap(), (5.0 + 6.0 + 9.0 + 10.0) / 4.0);
        let s = subsample_2d(&u, 2, 1).unwrap();
        assert_eq!(s.as_real().unwrap(), &[5.0, 7.0, 13.0, 15.0]);
    }
}
