//! Connection, curvature, Laplacian and the geometry of the `s`-level foliation
//! for any [`MetricModel`].
//!
//! ## Conventions
//!
//! - `Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
//! - `R^a_bcd = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb`, so that
//!   `R(∂_c, ∂_d)∂_b = R^a_bcd ∂_a`, lowered as `R_abcd = g_ae R^e_bcd`.
//! - Sectional curvature `K(X, Y) = R_abcd X^a Y^b X^c Y^d / (|X|²|Y|² − ⟨X,Y⟩²)`,
//!   which is `⟨R(X,Y)Y, X⟩` normalised; the hyperbolic plane has `K = −1`.
//! - Ricci `R_bd = R^a_bad`.
//! - The Laplacian is the positive one, `Δf = −g^{ij}(∂_ij f − Γ^k_ij ∂_k f)`,
//!   so `Δ log x₁ = 1` on the upper half-plane.
//! - Second fundamental form of the level sets of a unit normal coordinate `s`:
//!   `𝕀 = −½ ∂_s g_s`, shape operator `g_s^{-1}𝕀`, mean curvature its trace.
//!
//! Derivatives come from one of two independent routes ([`DerivativeRoute`]):
//! forward-mode hyper-dual numbers on the closed form, or central differences
//! with one Richardson level.

use crate::models::{bisector_coframe, frame_row, ChartMap, MetricModel, ModelError, Real};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_dual::{Dual64, HyperDual64};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("ill-conditioned metric: condition number {condition:.3e}, smallest eigenvalue {eigen_floor:.3e}")]
    IllConditioned { condition: f64, eigen_floor: f64 },
    #[error("degenerate plane: |X|^2|Y|^2 - <X,Y>^2 = {0:.3e}")]
    DegeneratePlane(f64),
    #[error("{0} exposes no unit normal coordinate")]
    UnsupportedChart(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DerivativeRoute {
    HyperDual,
    FiniteDifference,
}

/// Relative step for first derivatives on the finite-difference route.
pub const FD_STEP: f64 = 1e-4;
/// Relative step for second derivatives on the finite-difference route.
pub const FD_STEP_SECOND: f64 = 1e-3;
/// Largest accepted condition number of the metric.
pub const MAX_CONDITION: f64 = 1e12;

// ---------------------------------------------------------------------------
// jets of vector-valued functions

/// Value, first and (optionally) second partial derivatives of a map `R^d → R^k`.
#[derive(Debug, Clone)]
pub struct Jet {
    pub value: Vec<f64>,
    /// `d1[i][c] = ∂_i value[c]`
    pub d1: Vec<Vec<f64>>,
    /// `d2[i * d + j][c] = ∂_i ∂_j value[c]`
    pub d2: Option<Vec<Vec<f64>>>,
}

fn hyperdual_jet<F>(x: &[f64], second: bool, f: F) -> Jet
where
    F: Fn(&[HyperDual64]) -> Vec<HyperDual64>,
{
    let d = x.len();
    let seed = |i: usize, j: usize| -> Vec<HyperDual64> {
        x.iter()
            .enumerate()
            .map(|(k, &v)| HyperDual64::new(v, f64::from(k == i), f64::from(k == j), 0.0))
            .collect()
    };
    if !second {
        let mut d1 = Vec::with_capacity(d);
        let mut value = Vec::new();
        for i in 0..d {
            let out = f(&seed(i, i));
            if i == 0 {
                value = out.iter().map(|v| v.re).collect();
            }
            d1.push(out.iter().map(|v| v.eps1).collect());
        }
        return Jet { value, d1, d2: None };
    }
    let mut d1 = vec![Vec::new(); d];
    let mut d2 = vec![Vec::new(); d * d];
    let mut value = Vec::new();
    for i in 0..d {
        for j in i..d {
            let out = f(&seed(i, j));
            if i == 0 && j == 0 {
                value = out.iter().map(|v| v.re).collect();
            }
            if i == j {
                d1[i] = out.iter().map(|v| v.eps1).collect();
            }
            let h: Vec<f64> = out.iter().map(|v| v.eps1eps2).collect();
            d2[j * d + i] = h.clone();
            d2[i * d + j] = h;
        }
    }
    Jet {
        value,
        d1,
        d2: Some(d2),
    }
}

fn fd_jet<F>(x: &[f64], second: bool, f: F) -> Jet
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let d = x.len();
    let value = f(x);
    let k = value.len();
    let shifted = |moves: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, h) in moves {
            y[i] += h;
        }
        f(&y)
    };
    let richardson = |coarse: Vec<f64>, fine: Vec<f64>| -> Vec<f64> {
        coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
    };
    let step = |i: usize, rel: f64| rel * x[i].abs().max(1.0);

    let d1: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let central = |h: f64| -> Vec<f64> {
                let p = shifted(&[(i, h)]);
                let m = shifted(&[(i, -h)]);
                (0..k).map(|c| (p[c] - m[c]) / (2.0 * h)).collect()
            };
            let h = step(i, FD_STEP);
            richardson(central(h), central(h / 2.0))
        })
        .collect();
    if !second {
        return Jet { value, d1, d2: None };
    }
    let mut d2 = vec![Vec::new(); d * d];
    for i in 0..d {
        for j in i..d {
            let stencil = |scale: f64| -> Vec<f64> {
                let hi = step(i, FD_STEP_SECOND) * scale;
                if i == j {
                    let p = shifted(&[(i, hi)]);
                    let m = shifted(&[(i, -hi)]);
                    (0..k).map(|c| (p[c] - 2.0 * value[c] + m[c]) / (hi * hi)).collect()
                } else {
                    let hj = step(j, FD_STEP_SECOND) * scale;
                    let pp = shifted(&[(i, hi), (j, hj)]);
                    let pm = shifted(&[(i, hi), (j, -hj)]);
                    let mp = shifted(&[(i, -hi), (j, hj)]);
                    let mm = shifted(&[(i, -hi), (j, -hj)]);
                    (0..k)
                        .map(|c| (pp[c] - pm[c] - mp[c] + mm[c]) / (4.0 * hi * hj))
                        .collect()
                }
            };
            let h = richardson(stencil(1.0), stencil(0.5));
            d2[j * d + i] = h.clone();
            d2[i * d + j] = h;
        }
    }
    Jet {
        value,
        d1,
        d2: Some(d2),
    }
}

fn model_jet<M: MetricModel>(model: &M, x: &[f64], second: bool, route: DerivativeRoute) -> Jet {
    match route {
        DerivativeRoute::HyperDual => hyperdual_jet(x, second, |y| model.components(y)),
        DerivativeRoute::FiniteDifference => fd_jet(x, second, |y| model.components::<f64>(y)),
    }
}

// ---------------------------------------------------------------------------
// metric jet

/// Metric with its inverse and coordinate derivatives at one point.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub dim: usize,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    /// `dg[k] = ∂_k g`
    pub dg: Vec<DMatrix<f64>>,
    /// `ddg[k * dim + l] = ∂_k ∂_l g`
    pub ddg: Option<Vec<DMatrix<f64>>>,
    pub eigen_floor: f64,
    pub condition: f64,
}

/// Smallest eigenvalue and condition number of a symmetric matrix.
pub fn spectrum_bounds(g: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(g.clone()).eigenvalues;
    let lo = eig.min();
    let hi = eig.max();
    (lo, if lo > 0.0 { hi / lo } else { f64::INFINITY })
}

pub fn metric_jet<M: MetricModel>(
    model: &M,
    x: &[f64],
    route: DerivativeRoute,
    second: bool,
) -> Result<MetricJet, TensorError> {
    let dim = model.dim();
    if x.len() != dim {
        return Err(TensorError::Dimension {
            expected: dim,
            got: x.len(),
        });
    }
    model.check_domain(x)?;
    let jet = model_jet(model, x, second, route);
    let mat = |v: &[f64]| DMatrix::from_row_slice(dim, dim, v);
    let g = mat(&jet.value);
    let (eigen_floor, condition) = spectrum_bounds(&g);
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(TensorError::IllConditioned { condition, eigen_floor });
    }
    let ginv = g
        .clone()
        .try_inverse()
        .ok_or(TensorError::IllConditioned { condition, eigen_floor })?;
    Ok(MetricJet {
        dim,
        dg: jet.d1.iter().map(|v| mat(v)).collect(),
        ddg: jet.d2.map(|d2| d2.iter().map(|v| mat(v)).collect()),
        g,
        ginv,
        eigen_floor,
        condition,
    })
}

#[inline]
fn i3(d: usize, a: usize, b: usize, c: usize) -> usize {
    (a * d + b) * d + c
}

#[inline]
fn i4(d: usize, a: usize, b: usize, c: usize, e: usize) -> usize {
    ((a * d + b) * d + c) * d + e
}

/// `Γ[k][i][j] = Γ^k_ij`, flattened.
pub fn christoffel_from_jet(j: &MetricJet) -> Vec<f64> {
    let d = j.dim;
    let low = lowered_christoffel(d, &j.dg);
    raise(d, &j.ginv, &low)
}

/// `L[l][i][j] = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
fn lowered_christoffel(d: usize, dg: &[DMatrix<f64>]) -> Vec<f64> {
    let mut low = vec![0.0; d * d * d];
    for l in 0..d {
        for i in 0..d {
            for k in 0..d {
                low[i3(d, l, i, k)] = 0.5 * (dg[i][(k, l)] + dg[k][(i, l)] - dg[l][(i, k)]);
            }
        }
    }
    low
}

fn raise(d: usize, ginv: &DMatrix<f64>, low: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d * d * d];
    for k in 0..d {
        for l in 0..d {
            let gkl = ginv[(k, l)];
            if gkl == 0.0 {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    out[i3(d, k, i, j)] += gkl * low[i3(d, l, i, j)];
                }
            }
        }
    }
    out
}

pub fn christoffel<M: MetricModel>(model: &M, x: &[f64], route: DerivativeRoute) -> Result<Vec<f64>, TensorError> {
    Ok(christoffel_from_jet(&metric_jet(model, x, route, false)?))
}

/// Curvature data at a point. All arrays are flattened row-major.
#[derive(Debug, Clone)]
pub struct CurvatureAtPoint {
    pub dim: usize,
    pub metric: DMatrix<f64>,
    /// `christoffel[(k·d + i)·d + j] = Γ^k_ij`
    pub christoffel: Vec<f64>,
    /// Lowered `R_abcd`.
    pub riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
    pub eigen_floor: f64,
}

pub fn curvature<M: MetricModel>(
    model: &M,
    x: &[f64],
    route: DerivativeRoute,
) -> Result<CurvatureAtPoint, TensorError> {
    let jet = metric_jet(model, x, route, true)?;
    let d = jet.dim;
    let ddg = jet.ddg.as_ref().expect("second derivatives requested");
    let gam = christoffel_from_jet(&jet);

    // ∂_m Γ^k_ij = (∂_m g^{kl}) L_lij + g^{kl} ∂_m L_lij, ∂_m g^{-1} = −g^{-1}(∂_m g)g^{-1}
    let mut dgam = vec![0.0; d * d * d * d];
    let low = lowered_christoffel(d, &jet.dg);
    for mm in 0..d {
        let dginv = -(&jet.ginv * &jet.dg[mm] * &jet.ginv);
        let dlow_src: Vec<DMatrix<f64>> = (0..d).map(|k| ddg[mm * d + k].clone()).collect();
        let dlow = lowered_christoffel(d, &dlow_src);
        let a = raise(d, &dginv, &low);
        let b = raise(d, &jet.ginv, &dlow);
        for idx in 0..d * d * d {
            dgam[mm * d * d * d + idx] = a[idx] + b[idx];
        }
    }
    let dg_at = |m: usize, k: usize, i: usize, j: usize| dgam[m * d * d * d + i3(d, k, i, j)];

    let mut up = vec![0.0; d * d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    let mut v = dg_at(c, a, e, b) - dg_at(e, a, c, b);
                    for f in 0..d {
                        v += gam[i3(d, a, c, f)] * gam[i3(d, f, e, b)] - gam[i3(d, a, e, f)] * gam[i3(d, f, c, b)];
                    }
                    up[i4(d, a, b, c, e)] = v;
                }
            }
        }
    }
    let mut riemann = vec![0.0; d * d * d * d];
    for a in 0..d {
        for f in 0..d {
            let gaf = jet.g[(a, f)];
            if gaf == 0.0 {
                continue;
            }
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        riemann[i4(d, a, b, c, e)] += gaf * up[i4(d, f, b, c, e)];
                    }
                }
            }
        }
    }
    let ricci = DMatrix::from_fn(d, d, |b, e| (0..d).map(|a| up[i4(d, a, b, a, e)]).sum());
    let scalar = (&jet.ginv * &ricci).trace();
    Ok(CurvatureAtPoint {
        dim: d,
        metric: jet.g,
        christoffel: gam,
        riemann,
        ricci,
        scalar,
        eigen_floor: jet.eigen_floor,
    })
}

impl CurvatureAtPoint {
    pub fn gamma(&self, k: usize, i: usize, j: usize) -> f64 {
        self.christoffel[i3(self.dim, k, i, j)]
    }

    pub fn riemann_at(&self, a: usize, b: usize, c: usize, e: usize) -> f64 {
        self.riemann[i4(self.dim, a, b, c, e)]
    }

    fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.dim;
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| self.metric[(i, j)] * x[i] * y[j])
            .sum()
    }

    #[allow(clippy::needless_range_loop)]
    pub fn sectional(&self, x: &[f64], y: &[f64]) -> Result<f64, TensorError> {
        let d = self.dim;
        if x.len() != d || y.len() != d {
            return Err(TensorError::Dimension {
                expected: d,
                got: x.len().min(y.len()),
            });
        }
        let den = self.inner(x, x) * self.inner(y, y) - self.inner(x, y).powi(2);
        let scale = self.inner(x, x) * self.inner(y, y);
        if den < 1e-12 * scale.max(1e-300) || den <= 0.0 {
            return Err(TensorError::DegeneratePlane(den));
        }
        let mut num = 0.0;
        for a in 0..d {
            for b in 0..d {
                let ab = x[a] * y[b];
                if ab == 0.0 {
                    continue;
                }
                for c in 0..d {
                    for e in 0..d {
                        num += self.riemann_at(a, b, c, e) * ab * x[c] * y[e];
                    }
                }
            }
        }
        Ok(num / den)
    }

    /// Max violation of `R_abcd = −R_bacd = −R_abdc = R_cdab`, relative to `max |R|`.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let r = self.riemann_at(a, b, c, e);
                        worst = worst
                            .max((r + self.riemann_at(b, a, c, e)).abs())
                            .max((r + self.riemann_at(a, b, e, c)).abs())
                            .max((r - self.riemann_at(c, e, a, b)).abs());
                    }
                }
            }
        }
        worst / self.riemann_scale()
    }

    /// Max of `|R_abcd + R_acdb + R_adbc|`, relative to `max |R|`.
    pub fn bianchi_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let s = self.riemann_at(a, b, c, e) + self.riemann_at(a, c, e, b) + self.riemann_at(a, e, b, c);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst / self.riemann_scale()
    }

    fn riemann_scale(&self) -> f64 {
        self.riemann.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300)
    }

    /// `(c, defect)` with `c = tr(g^{-1}Ric)/dim` and `defect = max |Ric − c g|`
    /// measured in a `g`-orthonormal frame.
    pub fn einstein_constant(&self) -> (f64, f64) {
        let c = self.scalar / self.dim as f64;
        let eig = SymmetricEigen::new(self.metric.clone());
        let half = eig.eigenvectors.clone() * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
        let r = half.transpose() * &self.ricci * &half;
        let defect = (r - DMatrix::identity(self.dim, self.dim) * c).amax();
        (c, defect)
    }
}

pub fn sectional_curvature<M: MetricModel>(
    model: &M,
    x: &[f64],
    u: &[f64],
    v: &[f64],
    route: DerivativeRoute,
) -> Result<f64, TensorError> {
    curvature(model, x, route)?.sectional(u, v)
}

// ---------------------------------------------------------------------------
// scalar fields

/// A smooth scalar field on model coordinates, generic over [`Real`] so both
/// derivative routes apply.
pub trait ScalarField: Sync {
    fn eval<D: Real>(&self, x: &[D]) -> D;
}

/// `x ↦ x_i`.
#[derive(Debug, Clone, Copy)]
pub struct Coordinate(pub usize);

impl ScalarField for Coordinate {
    fn eval<D: Real>(&self, x: &[D]) -> D {
        x[self.0]
    }
}

/// `x ↦ log x_i`.
#[derive(Debug, Clone, Copy)]
pub struct LogCoordinate(pub usize);

impl ScalarField for LogCoordinate {
    fn eval<D: Real>(&self, x: &[D]) -> D {
        x[self.0].ln()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn eval<D: Real>(&self, _x: &[D]) -> D {
        D::from(self.0)
    }
}

fn field_jet<F: ScalarField>(f: &F, x: &[f64], route: DerivativeRoute) -> (f64, Vec<f64>, Vec<f64>) {
    let jet = match route {
        DerivativeRoute::HyperDual => hyperdual_jet(x, true, |y| vec![f.eval(y)]),
        DerivativeRoute::FiniteDifference => fd_jet(x, true, |y| vec![f.eval::<f64>(y)]),
    };
    let grad = jet.d1.iter().map(|v| v[0]).collect();
    let hess = jet.d2.expect("second derivatives").iter().map(|v| v[0]).collect();
    (jet.value[0], grad, hess)
}

/// Positive Laplace–Beltrami operator applied to `f` at `x`.
pub fn laplace_beltrami<M: MetricModel, F: ScalarField>(
    model: &M,
    f: &F,
    x: &[f64],
    route: DerivativeRoute,
) -> Result<f64, TensorError> {
    let jet = metric_jet(model, x, route, false)?;
    let d = jet.dim;
    let gam = christoffel_from_jet(&jet);
    let (_, grad, hess) = field_jet(f, x, route);
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let gij = jet.ginv[(i, j)];
            if gij == 0.0 {
                continue;
            }
            let conn: f64 = (0..d).map(|k| gam[i3(d, k, i, j)] * grad[k]).sum();
            acc += gij * (hess[i * d + j] - conn);
        }
    }
    Ok(-acc)
}

/// `|df|²_g`.
pub fn gradient_norm_sq<M: MetricModel, F: ScalarField>(
    model: &M,
    f: &F,
    x: &[f64],
    route: DerivativeRoute,
) -> Result<f64, TensorError> {
    let jet = metric_jet(model, x, route, false)?;
    let (_, grad, _) = field_jet(f, x, route);
    let gv = DVector::from_vec(grad);
    Ok((gv.transpose() * &jet.ginv * &gv)[(0, 0)])
}

/// `⟨df, dh⟩_g`.
pub fn gradient_inner<M: MetricModel, F: ScalarField, H: ScalarField>(
    model: &M,
    f: &F,
    h: &H,
    x: &[f64],
    route: DerivativeRoute,
) -> Result<f64, TensorError> {
    let jet = metric_jet(model, x, route, false)?;
    let (_, a, _) = field_jet(f, x, route);
    let (_, b, _) = field_jet(h, x, route);
    let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
    Ok((a.transpose() * &jet.ginv * &b)[(0, 0)])
}

// ---------------------------------------------------------------------------
// foliation

/// The splitting `g = ds² + g_s` at one point and the geometry of the level set.
#[derive(Debug, Clone)]
pub struct FoliationData {
    /// Coordinate indices spanning the slice (all but the normal coordinate).
    pub slice_indices: Vec<usize>,
    pub slice_metric: DMatrix<f64>,
    pub second_fundamental_form: DMatrix<f64>,
    pub shape_operator: DMatrix<f64>,
    pub mean_curvature: f64,
    /// `max(|g_ss − 1|, |g_sj|)`: zero when the coordinate is a unit normal.
    pub splitting_defect: f64,
}

pub fn second_fundamental_form<M: MetricModel>(
    model: &M,
    x: &[f64],
    route: DerivativeRoute,
) -> Result<FoliationData, TensorError> {
    let s = model
        .normal_coordinate()
        .ok_or_else(|| TensorError::UnsupportedChart(model.chart().name()))?;
    let jet = metric_jet(model, x, route, false)?;
    let d = jet.dim;
    let idx: Vec<usize> = (0..d).filter(|&i| i != s).collect();
    let k = idx.len();
    let gs = DMatrix::from_fn(k, k, |a, b| jet.g[(idx[a], idx[b])]);
    let ii = DMatrix::from_fn(k, k, |a, b| -0.5 * jet.dg[s][(idx[a], idx[b])]);
    let gs_inv = gs.clone().try_inverse().ok_or(TensorError::IllConditioned {
        condition: f64::INFINITY,
        eigen_floor: 0.0,
    })?;
    let shape = &gs_inv * &ii;
    let mut defect = (jet.g[(s, s)] - 1.0).abs();
    for &j in &idx {
        defect = defect.max(jet.g[(s, j)].abs());
    }
    Ok(FoliationData {
        slice_indices: idx,
        mean_curvature: shape.trace(),
        slice_metric: gs,
        second_fundamental_form: ii,
        shape_operator: shape,
        splitting_defect: defect,
    })
}

pub fn mean_curvature<M: MetricModel>(model: &M, x: &[f64], route: DerivativeRoute) -> Result<f64, TensorError> {
    Ok(second_fundamental_form(model, x, route)?.mean_curvature)
}

impl FoliationData {
    /// `|S v − λ v|_∞ / |v|_∞` for a slice vector `v` (slice coordinates).
    pub fn eigen_defect(&self, v: &[f64], lambda: f64) -> f64 {
        let v = DVector::from_column_slice(v);
        (&self.shape_operator * &v - &v * lambda).amax() / v.amax()
    }

    /// `𝕀(X, Y)` on slice vectors.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let (x, y) = (DVector::from_column_slice(x), DVector::from_column_slice(y));
        (x.transpose() * &self.second_fundamental_form * y)[(0, 0)]
    }
}

/// `𝕀` on the orthonormal slice vectors dual to the `ϑ₂` and `ϑ₁` rows of the
/// bisector coframe, as `[[𝕀(E₂,E₂), 𝕀(E₂,E₁)], [𝕀(E₁,E₂), 𝕀(E₁,E₁)]]`.
pub fn bisector_frame_block(m: usize, x: &[f64], fol: &FoliationData) -> [[f64; 2]; 2] {
    let fr = bisector_coframe::<f64>(m, x);
    let gs_inv = fol
        .slice_metric
        .clone()
        .try_inverse()
        .expect("slice metric inverted during construction");
    let dual = |row: usize| -> Vec<f64> {
        let e = DVector::from_iterator(
            fol.slice_indices.len(),
            fol.slice_indices.iter().map(|&i| fr.rows[row][i]),
        );
        (&gs_inv * e).iter().copied().collect()
    };
    let a = dual(frame_row::VT2);
    let b = dual(frame_row::VT1);
    [
        [fol.form(&a, &a), fol.form(&a, &b)],
        [fol.form(&b, &a), fol.form(&b, &b)],
    ]
}

fn tcc(s: f64, rho: f64) -> (f64, f64, f64) {
    ((s / 2.0).tanh(), (s / 2.0).cosh(), (rho / 2.0).cosh())
}

/// Mean curvature of the level set `s` of the bisector distance,
/// `−tanh(s/2)(m + 1/(cosh²(s/2)(cosh²(ρ/2) + tanh²(s/2))))`.
///
/// This is the trace of the shape operator whose block is
/// [`bisector_block_closed`] and whose remaining eigenvalue is `−½tanh(s/2)`.
pub fn bisector_mean_curvature_closed(m: usize, s: f64, rho: f64) -> f64 {
    bisector_mean_curvature_with(m, s, rho, 1.0)
}

/// The same expression with coefficient 2 in front of the second term, as it
/// circulates in the literature. It does not match the trace.
pub fn bisector_mean_curvature_printed(m: usize, s: f64, rho: f64) -> f64 {
    bisector_mean_curvature_with(m, s, rho, 2.0)
}

fn bisector_mean_curvature_with(m: usize, s: f64, rho: f64, coeff: f64) -> f64 {
    let (t, ch, c) = tcc(s, rho);
    -t * (m as f64 + coeff / (ch * ch * (c * c + t * t)))
}

/// Verified `𝕀` block in the frame of [`bisector_frame_block`].
pub fn bisector_block_closed(s: f64, rho: f64) -> [[f64; 2]; 2] {
    bisector_block_with(s, rho, 0.5)
}

/// Block with the off-diagonal entry `−sinh ρ/(2cosh³(s/2)(cosh²(ρ/2)+tanh²(s/2)))`
/// in the published form. Its diagonal agrees with [`bisector_block_closed`].
pub fn bisector_block_printed(s: f64, rho: f64) -> [[f64; 2]; 2] {
    bisector_block_with(s, rho, 1.0)
}

fn bisector_block_with(s: f64, rho: f64, off_scale: f64) -> [[f64; 2]; 2] {
    let (t, ch, c) = tcc(s, rho);
    let sh2 = (rho / 2.0).sinh().powi(2);
    let pre = -1.0 / (2.0 * (c * c + t * t));
    let a = pre * t * (4.0 + sh2 * (3.0 - t * t));
    let d = pre * t * (1.0 + t * t * c * c);
    let b = pre * off_scale * rho.sinh() / ch.powi(3);
    [[a, b], [b, d]]
}

// ---------------------------------------------------------------------------
// pullback

/// How the Jacobian of a chart map is obtained in [`pullback_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianRoute {
    /// Forward-mode dual numbers through the closed-form map.
    Analytic,
    /// Central differences with one Richardson level.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackReport {
    pub max_deviation: f64,
    /// Max of `|Δ_ij| / sqrt(g_ii g_jj)`, the deviation in coordinates rescaled to unit diagonal.
    pub max_scaled_deviation: f64,
    /// Index into the input points of the worst deviation.
    pub argmax: Option<usize>,
    pub evaluated: usize,
    /// Skipped points with the reason.
    pub skipped: Vec<(usize, String)>,
}

pub fn map_jacobian<C: ChartMap>(map: &C, x: &[f64], route: JacobianRoute) -> (Vec<f64>, DMatrix<f64>) {
    let d = x.len();
    let y = map.apply::<f64>(x);
    let k = y.len();
    let mut jac = DMatrix::zeros(k, d);
    match route {
        JacobianRoute::Analytic => {
            for i in 0..d {
                let xd: Vec<Dual64> = x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| Dual64::new(v, f64::from(i == j)))
                    .collect();
                for (r, v) in map.apply(&xd).iter().enumerate() {
                    jac[(r, i)] = v.eps;
                }
            }
        }
        JacobianRoute::FiniteDifference => {
            let jet = fd_jet(x, false, |z| map.apply::<f64>(z));
            for i in 0..d {
                for r in 0..k {
                    jac[(r, i)] = jet.d1[i][r];
                }
            }
        }
    }
    (y, jac)
}

/// Max over points of the entrywise `|Jᵀ g_target(Φ(x)) J − g_source(x)|`.
/// Points outside either domain are skipped and reported.
pub fn pullback_check<C, S, T>(
    map: &C,
    source: &S,
    target: &T,
    points: &[Vec<f64>],
    route: JacobianRoute,
) -> PullbackReport
where
    C: ChartMap,
    S: MetricModel,
    T: MetricModel,
{
    let results: Vec<Result<(f64, f64), String>> = points
        .par_iter()
        .map(|x| {
            let gs = source.evaluate(x).map_err(|e| e.to_string())?;
            let (y, jac) = map_jacobian(map, x, route);
            let gt = target.evaluate(&y).map_err(|e| e.to_string())?;
            let pulled = jac.transpose() * gt * jac;
            let diff = pulled - &gs;
            let scaled = DMatrix::from_fn(gs.nrows(), gs.ncols(), |i, j| {
                diff[(i, j)] / (gs[(i, i)] * gs[(j, j)]).sqrt()
            });
            Ok((diff.amax(), scaled.amax()))
        })
        .collect();
    let mut report = PullbackReport {
        max_deviation: 0.0,
        max_scaled_deviation: 0.0,
        argmax: None,
        evaluated: 0,
        skipped: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((dev, scaled)) => {
                report.evaluated += 1;
                report.max_scaled_deviation = report.max_scaled_deviation.max(scaled);
                if report.argmax.is_none() || dev > report.max_deviation {
                    report.max_deviation = dev;
                    report.argmax = Some(i);
                }
            }
            Err(reason) => report.skipped.push((i, reason)),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Bisector, BisectorToSiegel, IdentityMap, RealFermi, Siegel, UpperHalfReal};
    use approx::assert_abs_diff_eq;

    /// Flat metric for the trivial cases.
    struct Euclid(usize);
    impl MetricModel for Euclid {
        fn chart(&self) -> crate::models::Chart {
            crate::models::Chart::UpperHalfReal(self.0)
        }
        fn components<D: Real>(&self, _x: &[D]) -> Vec<D> {
            let n = self.0;
            (0..n * n).map(|k| D::from(f64::from(k % (n + 1) == 0))).collect()
        }
        fn check_domain(&self, _x: &[f64]) -> Result<(), ModelError> {
            Ok(())
        }
    }

    #[test]
    fn euclidean_christoffel_vanishes() {
        for route in [DerivativeRoute::HyperDual, DerivativeRoute::FiniteDifference] {
            let g = christoffel(&Euclid(3), &[0.3, -1.0, 2.0], route).unwrap();
            assert!(g.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn hyperbolic_plane_golden_values() {
        for route in [DerivativeRoute::HyperDual, DerivativeRoute::FiniteDifference] {
            let c = curvature(&UpperHalfReal { n: 2 }, &[1.0, 0.0], route).unwrap();
            let want = [
                ((0, 0, 0), -1.0),
                ((0, 1, 1), 1.0),
                ((1, 0, 1), -1.0),
                ((1, 1, 0), -1.0),
                ((0, 0, 1), 0.0),
                ((1, 0, 0), 0.0),
                ((1, 1, 1), 0.0),
            ];
            for ((k, i, j), v) in want {
                assert_abs_diff_eq!(c.gamma(k, i, j), v, epsilon = 1e-9);
            }
            let k = c.sectional(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
            assert_abs_diff_eq!(k, -1.0, epsilon = 1e-7);
            let lap = laplace_beltrami(&UpperHalfReal { n: 2 }, &LogCoordinate(0), &[1.0, 0.0], route).unwrap();
            assert_abs_diff_eq!(lap, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn log_x1_laplacian_scales_with_dimension() {
        // Δ log x₁ = n − 1 on the n-dimensional upper half-space
        let lap = laplace_beltrami(
            &UpperHalfReal { n: 4 },
            &LogCoordinate(0),
            &[0.7, 0.1, 0.2, -0.3],
            DerivativeRoute::HyperDual,
        )
        .unwrap();
        assert_abs_diff_eq!(lap, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_field_has_zero_laplacian() {
        let lap = laplace_beltrami(
            &Bisector { m: 2 },
            &Constant(2.5),
            &[0.3, 0.1, 1.0, 0.4],
            DerivativeRoute::HyperDual,
        )
        .unwrap();
        assert_eq!(lap, 0.0);
    }

    #[test]
    fn siegel_einstein_constant() {
        let c = curvature(&Siegel { m: 2 }, &[1.3, 0.2, 0.4, -0.7], DerivativeRoute::HyperDual).unwrap();
        let (k, defect) = c.einstein_constant();
        assert_abs_diff_eq!(k, -1.5, epsilon = 1e-10);
        assert!(defect < 1e-10);
        assert!(c.symmetry_defect() < 1e-12 && c.bianchi_defect() < 1e-12);
    }

    #[test]
    fn fermi_shape_operator() {
        let r: f64 = 0.8;
        let fol = second_fundamental_form(&RealFermi { n: 3 }, &[r, 1.2, 0.3], DerivativeRoute::HyperDual).unwrap();
        let want = DMatrix::identity(2, 2) * -r.tanh();
        assert!((fol.shape_operator - want).amax() < 1e-14);
        assert_eq!(fol.splitting_defect, 0.0);
    }

    #[test]
    fn upper_half_has_no_splitting() {
        let e = second_fundamental_form(&UpperHalfReal { n: 2 }, &[1.0, 0.0], DerivativeRoute::HyperDual);
        assert!(matches!(e, Err(TensorError::UnsupportedChart(_))));
    }

    #[test]
    fn degenerate_plane_rejected() {
        let c = curvature(&UpperHalfReal { n: 2 }, &[1.0, 0.0], DerivativeRoute::HyperDual).unwrap();
        assert!(matches!(
            c.sectional(&[1.0, 1.0], &[2.0, 2.0]),
            Err(TensorError::DegeneratePlane(_))
        ));
    }

    #[test]
    fn identity_pullback_is_exact() {
        let pts = vec![vec![0.5, 0.2, 1.0, 0.3], vec![-1.0, 0.0, 2.0, -0.4]];
        let r = pullback_check(
            &IdentityMap(crate::models::Chart::Bisector(2)),
            &Bisector { m: 2 },
            &Bisector { m: 2 },
            &pts,
            JacobianRoute::Analytic,
        );
        assert_eq!(r.max_deviation, 0.0);
        assert_eq!(r.evaluated, 2);
    }

    #[test]
    fn bisector_pullback_at_s1_rho1() {
        let pts = vec![vec![1.0, 0.0, 1.0, 0.0]];
        let r = pullback_check(
            &BisectorToSiegel { m: 2 },
            &Bisector { m: 2 },
            &Siegel { m: 2 },
            &pts,
            JacobianRoute::Analytic,
        );
        assert!(r.max_deviation < 1e-12, "{}", r.max_deviation);
    }

    #[test]
    fn pullback_skips_invalid_points() {
        let pts = vec![vec![1.0, 0.0, -1.0, 0.0], vec![1.0, 0.0, 1.0, 0.0]];
        let r = pullback_check(
            &BisectorToSiegel { m: 2 },
            &Bisector { m: 2 },
            &Siegel { m: 2 },
            &pts,
            JacobianRoute::Analytic,
        );
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].0, 0);
    }

    #[test]
    fn ill_conditioning_reported() {
        let e = metric_jet(&UpperHalfReal { n: 2 }, &[1e7, 0.0], DerivativeRoute::HyperDual, false);
        assert!(e.is_ok());
        struct Skewed;
        impl MetricModel for Skewed {
            fn chart(&self) -> crate::models::Chart {
                crate::models::Chart::UpperHalfReal(2)
            }
            fn components<D: Real>(&self, _x: &[D]) -> Vec<D> {
                vec![D::from(1.0), D::from(0.0), D::from(0.0), D::from(1e-14)]
            }
            fn check_domain(&self, _x: &[f64]) -> Result<(), ModelError> {
                Ok(())
            }
        }
        match metric_jet(&Skewed, &[1.0, 0.0], DerivativeRoute::HyperDual, false) {
            Err(TensorError::IllConditioned { eigen_floor, .. }) => {
                assert_abs_diff_eq!(eigen_floor, 1e-14, epsilon = 1e-20)
            }
            other => panic!("{other:?}"),
        }
    }
}
