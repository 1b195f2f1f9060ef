//! Fourth-order elasticity tensors and the periodic coefficient catalog.
//!
//! Entries are stored as `a[i][j][alpha][beta]`, the coefficient multiplying
//! `d_j u^beta` in the `alpha`-th equation differentiated in `x_i`. All index
//! arithmetic is written for a runtime dimension `d`; the rest of the crate
//! fixes `d = DIM`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::LaminateProfile;

/// Spatial dimension used by the mesh, FEM and two-scale modules.
pub const DIM: usize = 2;

#[derive(Clone, PartialEq)]
pub struct ElasticityTensor {
    d: usize,
    a: Vec<f64>,
}

impl ElasticityTensor {
    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        Self {
            d,
            a: vec![0.0; d * d * d * d],
        }
    }

    pub fn from_fn(d: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for al in 0..d {
                    for be in 0..d {
                        let k = t.index(i, j, al, be);
                        t.a[k] = f(i, j, al, be);
                    }
                }
            }
        }
        t
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn index(&self, i: usize, j: usize, al: usize, be: usize) -> usize {
        let d = self.d;
        ((i * d + j) * d + al) * d + be
    }

    /// Zero-based access to `a[i][j][alpha][beta]`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, al: usize, be: usize) -> f64 {
        self.a[self.index(i, j, al, be)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, al: usize, be: usize, value: f64) {
        let k = self.index(i, j, al, be);
        self.a[k] = value;
    }

    pub fn entries(&self) -> &[f64] {
        &self.a
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            d: self.d,
            a: self.a.iter().map(|v| v * c).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.d, other.d);
        self.a
            .iter()
            .zip(&other.a)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    }

    /// The `d^2 x d^2` matrix with rows `(i, alpha)` and columns `(j, beta)`,
    /// so that `xi^T M xi = a[i][j][alpha][beta] xi_i^alpha xi_j^beta`.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(d * d, d * d, |r, c| {
            let (i, al) = (r / d, r % d);
            let (j, be) = (c / d, c % d);
            self.get(i, j, al, be)
        })
    }

    /// Applies the tensor to a gradient `grad[beta][j]` (row-major `d x d`),
    /// returning the flux `sigma[alpha][i] = a[i][j][alpha][beta] grad[beta][j]`.
    pub fn apply(&self, grad: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for al in 0..d {
                let mut s = 0.0;
                for j in 0..d {
                    for be in 0..d {
                        s += self.get(i, j, al, be) * grad[be * d + j];
                    }
                }
                out[al * d + i] = s;
            }
        }
        out
    }

    /// Serializes to a JSON object whose keys carry explicit one-based index
    /// quadruples, e.g. `"a_hat[1][2][1][2]"`.
    pub fn to_json_map(&self, name: &str) -> serde_json::Map<String, serde_json::Value> {
        let d = self.d;
        let mut map = serde_json::Map::new();
        for i in 0..d {
            for j in 0..d {
                for al in 0..d {
                    for be in 0..d {
                        map.insert(
                            quadruple_key(name, i, j, al, be),
                            serde_json::Value::from(self.get(i, j, al, be)),
                        );
                    }
                }
            }
        }
        map
    }

    pub fn from_json_map(
        d: usize,
        name: &str,
        map: &serde_json::Map<String, serde_json::Value>,
    ) -> Result<Self> {
        let mut t = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for al in 0..d {
                    for be in 0..d {
                        let key = quadruple_key(name, i, j, al, be);
                        let v = map
                            .get(&key)
                            .and_then(|v| v.as_f64())
                            .ok_or_else(|| Error::Config(format!("missing tensor entry {key}")))?;
                        t.set(i, j, al, be, v);
                    }
                }
            }
        }
        Ok(t)
    }
}

fn quadruple_key(name: &str, i: usize, j: usize, al: usize, be: usize) -> String {
    format!("{name}[{}][{}][{}][{}]", i + 1, j + 1, al + 1, be + 1)
}

impl fmt::Debug for ElasticityTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ElasticityTensor(d={}, ", self.d)?;
        f.debug_list().entries(self.a.iter()).finish()?;
        write!(f, ")")
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    d: usize,
    entries: BTreeMap<String, f64>,
}

impl Serialize for ElasticityTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries = self
            .to_json_map("a")
            .into_iter()
            .map(|(k, v)| (k, v.as_f64().unwrap_or(f64::NAN)))
            .collect();
        TensorRepr { d: self.d, entries }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ElasticityTensor {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = TensorRepr::deserialize(de)?;
        let map = repr
            .entries
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::from(v)))
            .collect();
        Self::from_json_map(repr.d, "a", &map).map_err(serde::de::Error::custom)
    }
}

/// Which of the three index symmetries an entry violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SymmetryKind {
    /// `a[i][j][alpha][beta] = a[j][i][beta][alpha]`
    Major,
    /// `a[i][j][alpha][beta] = a[alpha][j][i][beta]`
    SwapIAlpha,
    /// `a[i][j][alpha][beta] = a[i][beta][alpha][j]`
    SwapJBeta,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryViolation {
    pub kind: SymmetryKind,
    /// Zero-based `(i, j, alpha, beta)`.
    pub indices: [usize; 4],
    pub partner: [usize; 4],
    pub value: f64,
    pub partner_value: f64,
}

/// Lists every entry that differs from one of its symmetric partners by more
/// than `1e-12` times the largest entry.
pub fn validate_symmetries(t: &ElasticityTensor) -> Vec<SymmetryViolation> {
    validate_symmetries_with_tol(t, 1e-12)
}

pub fn validate_symmetries_with_tol(t: &ElasticityTensor, rel_tol: f64) -> Vec<SymmetryViolation> {
    let d = t.dim();
    let tol = rel_tol * t.max_abs();
    let mut out = Vec::new();
    for i in 0..d {
        for j in 0..d {
            for al in 0..d {
                for be in 0..d {
                    let v = t.get(i, j, al, be);
                    let partners = [
                        (SymmetryKind::Major, [j, i, be, al]),
                        (SymmetryKind::SwapIAlpha, [al, j, i, be]),
                        (SymmetryKind::SwapJBeta, [i, be, al, j]),
                    ];
                    for (kind, p) in partners {
                        let w = t.get(p[0], p[1], p[2], p[3]);
                        if (v - w).abs() > tol {
                            out.push(SymmetryViolation {
                                kind,
                                indices: [i, j, al, be],
                                partner: p,
                                value: v,
                                partner_value: w,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Largest symmetry defect relative to the largest entry.
pub fn symmetry_residual(t: &ElasticityTensor) -> f64 {
    let scale = t.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let d = t.dim();
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            for al in 0..d {
                for be in 0..d {
                    let v = t.get(i, j, al, be);
                    worst = worst
                        .max((v - t.get(j, i, be, al)).abs())
                        .max((v - t.get(al, j, i, be)).abs())
                        .max((v - t.get(i, be, al, j)).abs());
                }
            }
        }
    }
    worst / scale
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    pub kappa1: f64,
    pub kappa2: f64,
}

impl EllipticityBounds {
    pub fn new(kappa1: f64, kappa2: f64) -> Result<Self> {
        if !(kappa1 > 0.0 && kappa1 <= kappa2) {
            return Err(Error::InvalidArgument(format!(
                "ellipticity bounds need 0 < kappa1 <= kappa2, got ({kappa1}, {kappa2})"
            )));
        }
        Ok(Self { kappa1, kappa2 })
    }
}

/// Orthonormal basis of the symmetric `d x d` matrices, flattened with
/// index `i * d + alpha`.
fn symmetric_basis(d: usize) -> DMatrix<f64> {
    let m = d * (d + 1) / 2;
    let mut s = DMatrix::zeros(d * d, m);
    let mut col = 0;
    for i in 0..d {
        for al in i..d {
            if i == al {
                s[(i * d + i, col)] = 1.0;
            } else {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                s[(i * d + al, col)] = r;
                s[(al * d + i, col)] = r;
            }
            col += 1;
        }
    }
    s
}

/// Exact ellipticity constants of a single tensor: the smallest value of
/// `A xi : xi / |xi + xi^T|^2` over symmetric `xi` and the largest value of
/// `A xi : xi / |xi|^2` over all `xi`.
pub fn tensor_bounds(t: &ElasticityTensor) -> (f64, f64) {
    let m = t.as_matrix();
    let full = SymmetricEigen::new(m.clone());
    let kappa2 = full.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s = symmetric_basis(t.dim());
    let restricted = s.transpose() * m * s;
    let sym = SymmetricEigen::new(restricted);
    let lo = sym.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    // |xi + xi^T|^2 = 4 |xi|^2 for symmetric xi
    (lo / 4.0, kappa2)
}

/// Estimates the ellipticity constants of `field` from `sample_count`
/// uniformly drawn cell points.
pub fn ellipticity_probe(field: &CoefficientField, sample_count: usize, seed: u64) -> Result<(f64, f64)> {
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample_count must be at least 1".into()));
    }
    let d = field.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k1 = f64::INFINITY;
    let mut k2 = f64::NEG_INFINITY;
    let mut y = vec![0.0; d];
    for _ in 0..sample_count {
        for c in y.iter_mut() {
            *c = rng.gen_range(-0.5..0.5);
        }
        let (lo, hi) = tensor_bounds(&field.evaluate(&y));
        if lo <= 0.0 {
            return Err(Error::NonElliptic {
                quotient: lo,
                y: y.clone(),
            });
        }
        k1 = k1.min(lo);
        k2 = k2.max(hi);
    }
    Ok((k1, k2))
}

/// Isotropic tensor `lambda d_{i alpha} d_{j beta} + mu (d_{ij} d_{alpha beta} + d_{i beta} d_{j alpha})`
/// in dimension `DIM`.
pub fn isotropic_tensor(lambda: f64, mu: f64) -> Result<ElasticityTensor> {
    isotropic_tensor_in(DIM, lambda, mu)
}

pub fn isotropic_tensor_in(d: usize, lambda: f64, mu: f64) -> Result<ElasticityTensor> {
    if !(mu > 0.0 && lambda + 2.0 * mu / d as f64 > 0.0) {
        return Err(Error::InvalidModuli { lambda, mu });
    }
    Ok(isotropic_unchecked(d, lambda, mu))
}

fn isotropic_unchecked(d: usize, lambda: f64, mu: f64) -> ElasticityTensor {
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    ElasticityTensor::from_fn(d, |i, j, al, be| {
        lambda * delta(i, al) * delta(j, be) + mu * (delta(i, j) * delta(al, be) + delta(i, be) * delta(j, al))
    })
}

/// Ellipticity constants of an isotropic tensor in closed form.
fn isotropic_bounds(d: usize, lambda: f64, mu: f64) -> (f64, f64) {
    if d == 1 {
        let s = lambda + 2.0 * mu;
        return (s / 4.0, s);
    }
    let df = d as f64;
    ((2.0 * mu + (df * lambda).min(0.0)) / 4.0, 2.0 * mu + df * lambda.max(0.0))
}

/// Wraps a cell coordinate into `(-1/2, 1/2]`, so that a point on a phase
/// interface takes the value of the phase below it.
#[inline]
pub fn wrap_cell(y: f64) -> f64 {
    y - (y - 0.5).ceil()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientKind {
    Constant { tensor: ElasticityTensor },
    Laminate { profile: LaminateProfile },
    /// Two isotropic phases `(lambda, mu)` and `contrast * (lambda, mu)`
    /// arranged as a `2^d` checkerboard of the cell.
    Checkerboard { lambda: f64, mu: f64, contrast: f64 },
    /// Isotropic with `lambda(y) = lambda (1 + a prod_k cos 2 pi y_k)` and
    /// `mu(y) = mu (1 + a mean_k sin 2 pi y_k)`.
    SmoothTrig { lambda: f64, mu: f64, amplitude: f64 },
}

/// A 1-periodic coefficient field `y -> A(y)` on the cell `[-1/2, 1/2]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    d: usize,
    kind: CoefficientKind,
    declared_bounds: EllipticityBounds,
}

impl CoefficientField {
    pub fn constant(tensor: ElasticityTensor) -> Result<Self> {
        if !validate_symmetries(&tensor).is_empty() {
            return Err(Error::InvalidArgument("constant tensor violates the elasticity symmetries".into()));
        }
        let (k1, k2) = tensor_bounds(&tensor);
        let bounds = EllipticityBounds::new(k1, k2).map_err(|_| Error::NonElliptic {
            quotient: k1,
            y: vec![],
        })?;
        Ok(Self {
            d: tensor.dim(),
            kind: CoefficientKind::Constant { tensor },
            declared_bounds: bounds,
        })
    }

    pub fn laminate(profile: LaminateProfile) -> Result<Self> {
        profile.validate()?;
        let d = profile.dim();
        let mut k1 = f64::INFINITY;
        let mut k2 = f64::NEG_INFINITY;
        for (p, t) in profile.phases.iter().enumerate() {
            if !validate_symmetries(t).is_empty() {
                return Err(Error::InvalidArgument(format!("laminate phase {p} violates the elasticity symmetries")));
            }
            let (lo, hi) = tensor_bounds(t);
            k1 = k1.min(lo);
            k2 = k2.max(hi);
        }
        let bounds = EllipticityBounds::new(k1, k2).map_err(|_| Error::NonElliptic {
            quotient: k1,
            y: vec![],
        })?;
        Ok(Self {
            d,
            kind: CoefficientKind::Laminate { profile },
            declared_bounds: bounds,
        })
    }

    /// Equal-volume two-phase isotropic laminate with phases `(lambda, mu)` on
    /// `(-1/2, 0]` and `contrast * (lambda, mu)` on `(0, 1/2]` along `direction`.
    pub fn laminate_contrast(d: usize, direction: usize, lambda: f64, mu: f64, contrast: f64) -> Result<Self> {
        check_contrast(contrast)?;
        let soft = isotropic_tensor_in(d, lambda, mu)?;
        let stiff = isotropic_tensor_in(d, contrast * lambda, contrast * mu)?;
        Self::laminate(LaminateProfile::new(d, direction, vec![-0.5, 0.0], vec![soft, stiff])?)
    }

    pub fn checkerboard(d: usize, lambda: f64, mu: f64, contrast: f64) -> Result<Self> {
        check_contrast(contrast)?;
        isotropic_tensor_in(d, lambda, mu)?;
        isotropic_tensor_in(d, contrast * lambda, contrast * mu)?;
        let (a1, a2) = isotropic_bounds(d, lambda, mu);
        let (b1, b2) = isotropic_bounds(d, contrast * lambda, contrast * mu);
        Ok(Self {
            d,
            kind: CoefficientKind::Checkerboard { lambda, mu, contrast },
            declared_bounds: EllipticityBounds::new(a1.min(b1), a2.max(b2))?,
        })
    }

    pub fn smooth_trig(d: usize, lambda: f64, mu: f64, amplitude: f64) -> Result<Self> {
        if !(amplitude.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!("amplitude must lie in (-1, 1), got {amplitude}")));
        }
        let a = amplitude.abs();
        let (lam_lo, lam_hi) = if lambda >= 0.0 {
            (lambda * (1.0 - a), lambda * (1.0 + a))
        } else {
            (lambda * (1.0 + a), lambda * (1.0 - a))
        };
        let (mu_lo, mu_hi) = (mu * (1.0 - a), mu * (1.0 + a));
        isotropic_tensor_in(d, lam_lo, mu_lo)?;
        let df = d as f64;
        let k1 = (2.0 * mu_lo + (df * lam_lo).min(0.0)) / 4.0;
        let k2 = 2.0 * mu_hi + df * lam_hi.max(0.0);
        Ok(Self {
            d,
            kind: CoefficientKind::SmoothTrig { lambda, mu, amplitude },
            declared_bounds: EllipticityBounds::new(k1, k2)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    pub fn declared_bounds(&self) -> EllipticityBounds {
        self.declared_bounds
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            CoefficientKind::Constant { .. } => "constant",
            CoefficientKind::Laminate { .. } => "laminate",
            CoefficientKind::Checkerboard { .. } => "checkerboard",
            CoefficientKind::SmoothTrig { .. } => "smooth_trig",
        }
    }

    /// True when the field is piecewise constant with interfaces on dyadic
    /// cell-grid lines.
    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self.kind, CoefficientKind::SmoothTrig { .. })
    }

    /// Evaluates `A(y)`; `y` may lie anywhere in `R^d`.
    pub fn evaluate(&self, y: &[f64]) -> ElasticityTensor {
        debug_assert_eq!(y.len(), self.d);
        match &self.kind {
            CoefficientKind::Constant { tensor } => tensor.clone(),
            CoefficientKind::Laminate { profile } => profile.phases[profile.phase_at(y[profile.direction])].clone(),
            CoefficientKind::Checkerboard { lambda, mu, contrast } => {
                let upper = y.iter().filter(|&&c| wrap_cell(c) > 0.0).count();
                if upper % 2 == 0 {
                    isotropic_unchecked(self.d, *lambda, *mu)
                } else {
                    isotropic_unchecked(self.d, contrast * lambda, contrast * mu)
                }
            }
            CoefficientKind::SmoothTrig { lambda, mu, amplitude } => {
                let prod: f64 = y.iter().map(|&c| (2.0 * PI * c).cos()).product();
                let mean: f64 = y.iter().map(|&c| (2.0 * PI * c).sin()).sum::<f64>() / self.d as f64;
                isotropic_unchecked(self.d, lambda * (1.0 + amplitude * prod), mu * (1.0 + amplitude * mean))
            }
        }
    }
}

fn check_contrast(contrast: f64) -> Result<()> {
    if contrast > 0.0 && contrast.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("contrast must be positive, got {contrast}")))
    }
}
