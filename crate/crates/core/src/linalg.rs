//! Small dense-vector helpers and a matrix-free conjugate gradient solver.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn axpy_in_place(a: &mut [f64], s: f64, b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * y;
    }
}

/// Normalizes in place and returns the previous norm. Leaves zero vectors untouched.
pub fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        for x in a.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Index of the first non-finite entry, if any.
pub fn first_non_finite(a: &[f64]) -> Option<usize> {
    a.iter().position(|x| !x.is_finite())
}

/// Options for [`conjugate_gradient`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Relative residual tolerance `‖Av − b‖ ≤ tol·‖b‖`.
    pub tol: f64,
    /// Iteration cap; `None` means `10·dim`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iters: usize,
    pub rel_residual: f64,
}

/// Solves `A v = b` for a symmetric positive definite operator given as a closure.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], opts: CgOptions) -> Result<CgSolution>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x,
            iters: 0,
            rel_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = norm_sq(&r);
    for k in 0..max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // operator not positive definite along p (or NaN)
            return Err(Error::CgNotConverged {
                iters: k,
                residual: rs.sqrt() / b_norm,
            });
        }
        let step = rs / pap;
        axpy_in_place(&mut x, step, &p);
        axpy_in_place(&mut r, -step, &ap);
        let rs_new = norm_sq(&r);
        if rs_new.sqrt() <= opts.tol * b_norm {
            return Ok(CgSolution {
                x,
                iters: k + 1,
                rel_residual: rs_new.sqrt() / b_norm,
            });
        }
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_new;
    }
    Err(Error::CgNotConverged {
        iters: max_iter,
        residual: rs.sqrt() / b_norm,
    })
}
