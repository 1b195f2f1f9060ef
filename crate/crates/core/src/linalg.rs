//! Preconditioned conjugate gradients and small vector helpers.

use crate::error::{Error, Result};

pub trait LinearOperator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(diag: &[f64]) -> Self {
        Self {
            inv_diag: diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect(),
        }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    /// Relative residual target `|b - A x| / |b|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl CgOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CgStats {
    pub iterations: usize,
    /// Final true relative residual.
    pub residual: f64,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solves `A x = b` by preconditioned CG, starting from the value in `x`.
///
/// `project`, when given, maps vectors onto the subspace the operator is
/// definite on; it is applied to `b`, the initial iterate, and every
/// preconditioned residual, so singular consistent systems stay in that
/// subspace.
pub fn pcg(
    op: &dyn LinearOperator,
    pre: &dyn Preconditioner,
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
    project: Option<&dyn Fn(&mut [f64])>,
) -> Result<CgStats> {
    let n = op.len();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let mut rhs = b.to_vec();
    if let Some(p) = project {
        p(&mut rhs);
        p(x);
    }
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats::default());
    }
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(&rhs) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    if let Some(p) = project {
        p(&mut z);
    }
    let mut p_dir = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while rel > opts.tol && it < opts.max_iter {
        op.apply(&p_dir, &mut q);
        let pq = dot(&p_dir, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        axpy(alpha, &p_dir, x);
        axpy(-alpha, &q, &mut r);
        it += 1;
        rel = norm(&r) / bnorm;
        if !rel.is_finite() {
            break;
        }
        if rel <= opts.tol {
            break;
        }
        pre.apply(&r, &mut z);
        if let Some(p) = project {
            p(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p_dir.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    // recurrence residuals drift; report the true one
    op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(&rhs) {
        *ri = bi - *ri;
    }
    let true_rel = norm(&r) / bnorm;
    let stats = CgStats {
        iterations: it,
        residual: true_rel,
    };
    if !true_rel.is_finite() || true_rel > opts.tol * 10.0 {
        return Err(Error::SolverDiverged {
            tol: opts.tol,
            iterations: it,
            residual: true_rel,
        });
    }
    Ok(stats)
}

/// Compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Sum of a slice with compensation.
pub fn accurate_sum(values: &[f64]) -> f64 {
    let mut s = CompensatedSum::default();
    values.iter().for_each(|&v| s.add(v));
    s.value()
}

/// Subtracts the mean of each of `comps` interleaved components.
pub fn remove_component_means(v: &mut [f64], comps: usize) {
    let count = v.len() / comps;
    for c in 0..comps {
        let mean: f64 = v.iter().skip(c).step_by(comps).sum::<f64>() / count as f64;
        v.iter_mut().skip(c).step_by(comps).for_each(|x| *x -= mean);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Tridiag(usize);

    impl LinearOperator for Tridiag {
        fn len(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let n = self.0;
            for i in 0..n {
                let mut s = 2.0 * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i + 1 < n {
                    s -= x[i + 1];
                }
                y[i] = s;
            }
        }
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let op = Tridiag(50);
        let exact: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        op.apply(&exact, &mut b);
        let mut x = vec![0.0; 50];
        let stats = pcg(&op, &IdentityPreconditioner, &b, &mut x, CgOptions::new(1e-12, 200), None).unwrap();
        assert!(stats.residual <= 1e-11);
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let op = Tridiag(5);
        let mut x = vec![1.0; 5];
        let stats = pcg(&op, &IdentityPreconditioner, &[0.0; 5], &mut x, CgOptions::new(1e-10, 10), None).unwrap();
        assert_eq!(stats.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stalls_are_reported() {
        let op = Tridiag(200);
        let b: Vec<f64> = (0..200).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; 200];
        let err = pcg(&op, &IdentityPreconditioner, &b, &mut x, CgOptions::new(1e-14, 3), None).unwrap_err();
        assert!(matches!(err, Error::SolverDiverged { iterations: 3, .. }));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(accurate_sum(&v), 2.0);
    }

    #[test]
    fn component_means_vanish() {
        let mut v = vec![1.0, 10.0, 3.0, 20.0, 5.0, 60.0];
        remove_component_means(&mut v, 2);
        assert!((v[0] + v[2] + v[4]).abs() < 1e-14);
        assert!((v[1] + v[3] + v[5]).abs() < 1e-12);
    }
}
