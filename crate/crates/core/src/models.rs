//! Closed-form hyperbolic metrics, the coordinate maps between charts and
//! the model isometries.
//!
//! Charts and their model coordinates (the coordinates the metric is written in):
//!
//! | chart | stored coordinates | model coordinates |
//! |---|---|---|
//! | `UpperHalfReal(n)` | `x ∈ R^n`, `x₁ > 0` | same |
//! | `RealFermi(n)` | `(r, ξ₁..ξ_{n-1})`, `ξ₁ > 0` | same |
//! | `Siegel(m)` | `(Re z₁, Im z₁, .., Re z_m, Im z_m)` | `(f, v, Re z₁, Im z₁, ..)` |
//! | `Bisector(m)` | `(s, τ, ρ, y)`, `y ∈ S^{2m-3} ⊂ R^{2m-2}` | `(s, τ, ρ, u)`, `u` sphere chart |
//! | `UVRho(m)` | `(u, v, ϱ, y)` | |
//!
//! The sphere chart is an angle `β` with `y = (cos β, sin β)` for `m = 2` and
//! inverse stereographic projection from `(0, .., 0, 1)` for `m ≥ 3`.
//! Complex pairs are stored as `(re, im)` and `i·(a + ib) = -b + ia`.
//!
//! Metrics and maps are generic over [`Real`], so the same closed form is
//! evaluated in `f64` or in hyper-dual numbers for exact derivatives.

use nalgebra::DMatrix;
use num_dual::DualNum;
use rand::Rng;
use thiserror::Error;

/// Scalar type accepted by the closed forms: `f64` or a dual number over `f64`.
pub trait Real: DualNum<Primitive = f64> + Copy + Send + Sync {}
impl<T: DualNum<Primitive = f64> + Copy + Send + Sync> Real for T {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{chart}: point outside the chart domain: {reason}")]
    Domain { chart: String, reason: String },
    #[error("{chart}: expected {expected} coordinates, got {got}")]
    Dimension { chart: String, expected: usize, got: usize },
    #[error("{0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chart {
    UpperHalfReal(usize),
    RealFermi(usize),
    Siegel(usize),
    Bisector(usize),
    UVRho(usize),
}

impl Chart {
    pub fn name(self) -> String {
        match self {
            Chart::UpperHalfReal(n) => format!("upper-half-real(n={n})"),
            Chart::RealFermi(n) => format!("real-fermi(n={n})"),
            Chart::Siegel(m) => format!("siegel(m={m})"),
            Chart::Bisector(m) => format!("bisector(m={m})"),
            Chart::UVRho(m) => format!("uv-rho(m={m})"),
        }
    }

    /// Real dimension of the manifold.
    pub fn manifold_dim(self) -> usize {
        match self {
            Chart::UpperHalfReal(n) | Chart::RealFermi(n) => n,
            Chart::Siegel(m) | Chart::Bisector(m) | Chart::UVRho(m) => 2 * m,
        }
    }

    /// Number of stored coordinates of a [`ChartPoint`].
    pub fn stored_len(self) -> usize {
        match self {
            Chart::UpperHalfReal(n) | Chart::RealFermi(n) => n,
            Chart::Siegel(m) => 2 * m,
            Chart::Bisector(m) | Chart::UVRho(m) => 3 + 2 * m - 2,
        }
    }

    pub fn validate_parameter(self) -> Result<(), ModelError> {
        match self {
            Chart::UpperHalfReal(n) | Chart::RealFermi(n) if n < 2 => {
                Err(ModelError::Parameter(format!("real dimension n must be >= 2, got {n}")))
            }
            Chart::Siegel(m) | Chart::Bisector(m) | Chart::UVRho(m) if m < 2 => Err(ModelError::Parameter(format!(
                "complex dimension m must be >= 2, got {m}"
            ))),
            _ => Ok(()),
        }
    }
}

fn domain(chart: Chart, reason: impl Into<String>) -> ModelError {
    ModelError::Domain {
        chart: chart.name(),
        reason: reason.into(),
    }
}

const UNIT_TOL: f64 = 1e-10;

/// A validated point in a named chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    chart: Chart,
    coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: Chart, coords: Vec<f64>) -> Result<Self, ModelError> {
        chart.validate_parameter()?;
        if coords.len() != chart.stored_len() {
            return Err(ModelError::Dimension {
                chart: chart.name(),
                expected: chart.stored_len(),
                got: coords.len(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(domain(chart, "non-finite coordinate"));
        }
        match chart {
            Chart::UpperHalfReal(_) if coords[0] <= 0.0 => {
                return Err(domain(chart, format!("x1 = {} <= 0", coords[0])))
            }
            Chart::RealFermi(_) if coords[1] <= 0.0 => return Err(domain(chart, format!("xi1 = {} <= 0", coords[1]))),
            Chart::Siegel(m) => {
                let f = siegel_defining_function(m, &coords);
                if f <= 0.0 {
                    return Err(domain(chart, format!("f(z) = {f} <= 0")));
                }
            }
            Chart::Bisector(_) => {
                if coords[2] <= 0.0 {
                    return Err(domain(chart, format!("rho = {} <= 0", coords[2])));
                }
                check_unit(chart, &coords[3..])?;
            }
            Chart::UVRho(_) => {
                let (u, v, q) = (coords[0], coords[1], coords[2]);
                if !(u > 0.0 && u <= 1.0) || !(v > 0.0 && v <= 1.0) || q <= 0.0 {
                    return Err(domain(chart, "need u, v in (0, 1] and varrho > 0"));
                }
                check_unit(chart, &coords[3..])?;
            }
            _ => {}
        }
        Ok(Self { chart, coords })
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Bisector point from `(s, τ, ρ)` and a unit vector `y`.
    pub fn bisector(m: usize, s: f64, tau: f64, rho: f64, y: &[f64]) -> Result<Self, ModelError> {
        let mut c = vec![s, tau, rho];
        c.extend_from_slice(y);
        Self::new(Chart::Bisector(m), c)
    }

    /// Siegel point from holomorphic coordinates given as `(re, im)` pairs.
    pub fn siegel(z: &[(f64, f64)]) -> Result<Self, ModelError> {
        let c = z.iter().flat_map(|&(a, b)| [a, b]).collect();
        Self::new(Chart::Siegel(z.len()), c)
    }

    /// Coordinates the metric of this chart is written in.
    pub fn model_coords(&self) -> Result<Vec<f64>, ModelError> {
        match self.chart {
            Chart::UpperHalfReal(_) | Chart::RealFermi(_) => Ok(self.coords.clone()),
            Chart::Siegel(m) => Ok(holomorphic_to_siegel(m, &self.coords)),
            Chart::Bisector(m) => {
                let mut x = self.coords[..3].to_vec();
                x.extend(sphere_params(m, &self.coords[3..]).map_err(|r| domain(self.chart, r))?);
                Ok(x)
            }
            Chart::UVRho(_) => Err(domain(self.chart, "no metric is written in (u, v, varrho)")),
        }
    }

    /// Inverse of [`ChartPoint::model_coords`].
    pub fn from_model_coords(chart: Chart, x: &[f64]) -> Result<Self, ModelError> {
        chart.validate_parameter()?;
        if x.len() != chart.manifold_dim() {
            return Err(ModelError::Dimension {
                chart: chart.name(),
                expected: chart.manifold_dim(),
                got: x.len(),
            });
        }
        match chart {
            Chart::UpperHalfReal(_) | Chart::RealFermi(_) => Self::new(chart, x.to_vec()),
            Chart::Siegel(m) => Self::new(chart, siegel_to_holomorphic(m, x)),
            Chart::Bisector(m) => {
                let mut c = x[..3].to_vec();
                c.extend(sphere_point(m, &x[3..]));
                Self::new(chart, c)
            }
            Chart::UVRho(_) => Err(domain(chart, "no model coordinates")),
        }
    }
}

fn check_unit(chart: Chart, y: &[f64]) -> Result<(), ModelError> {
    let n2: f64 = y.iter().map(|v| v * v).sum();
    if (n2.sqrt() - 1.0).abs() > UNIT_TOL {
        return Err(domain(chart, format!("|y| = {} != 1", n2.sqrt())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// small generic helpers

#[inline]
pub(crate) fn c<D: Real>(v: f64) -> D {
    D::from(v)
}

/// Multiplication by `i` on a vector of complex pairs.
pub fn mul_i<D: Real>(v: &[D]) -> Vec<D> {
    let mut out = v.to_vec();
    for j in 0..v.len() / 2 {
        out[2 * j] = -v[2 * j + 1];
        out[2 * j + 1] = v[2 * j];
    }
    out
}

fn dot<D: Real>(a: &[D], b: &[D]) -> D {
    a.iter().zip(b).fold(c::<D>(0.0), |acc, (x, y)| acc + *x * *y)
}

/// Row-major `dim × dim` matrix `AᵀA` from covector rows.
fn gram<D: Real>(rows: &[Vec<D>], dim: usize) -> Vec<D> {
    let mut g = vec![c::<D>(0.0); dim * dim];
    for row in rows {
        for i in 0..dim {
            for j in 0..dim {
                g[i * dim + j] += row[i] * row[j];
            }
        }
    }
    g
}

pub fn to_dmatrix(dim: usize, g: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(dim, dim, g)
}

// ---------------------------------------------------------------------------
// sphere chart

/// Point of `S^{2m-3} ⊂ R^{2m-2}` from sphere-chart parameters.
pub fn sphere_point<D: Real>(m: usize, u: &[D]) -> Vec<D> {
    if m == 2 {
        return vec![u[0].cos(), u[0].sin()];
    }
    let r2 = dot(u, u);
    let den = r2 + 1.0;
    let mut y: Vec<D> = u.iter().map(|&ui| ui * 2.0 / den).collect();
    y.push((r2 - 1.0) / den);
    y
}

/// Jacobian `∂y/∂u`, `(2m-2) × (2m-3)` rows.
pub fn sphere_jacobian<D: Real>(m: usize, u: &[D]) -> Vec<Vec<D>> {
    if m == 2 {
        return vec![vec![-u[0].sin()], vec![u[0].cos()]];
    }
    let k = u.len();
    let r2 = dot(u, u);
    let den = r2 + 1.0;
    let den2 = den * den;
    let mut p = vec![vec![c::<D>(0.0); k]; k + 1];
    for j in 0..k {
        for l in 0..k {
            let mut v = -u[j] * u[l] * 4.0 / den2;
            if j == l {
                v += c::<D>(2.0) / den;
            }
            p[j][l] = v;
        }
    }
    for l in 0..k {
        p[k][l] = u[l] * 4.0 / den2;
    }
    p
}

/// Sphere-chart parameters of a unit vector `y`.
pub fn sphere_params(m: usize, y: &[f64]) -> Result<Vec<f64>, String> {
    if m == 2 {
        return Ok(vec![y[1].atan2(y[0])]);
    }
    let last = y[y.len() - 1];
    let den = 1.0 - last;
    if den < 1e-12 {
        return Err("y at the pole of the stereographic chart".into());
    }
    Ok(y[..y.len() - 1].iter().map(|v| v / den).collect())
}

// ---------------------------------------------------------------------------
// metric models

/// A closed-form metric field in the model coordinates of its chart.
pub trait MetricModel: Send + Sync {
    fn chart(&self) -> Chart;

    fn dim(&self) -> usize {
        self.chart().manifold_dim()
    }

    /// Row-major metric components at model coordinates `x`.
    fn components<D: Real>(&self, x: &[D]) -> Vec<D>;

    /// Domain check on model coordinates.
    fn check_domain(&self, x: &[f64]) -> Result<(), ModelError>;

    /// Index of a coordinate `s` with `g = ds² + g_s`, `g_s` without `ds` terms.
    fn normal_coordinate(&self) -> Option<usize> {
        None
    }

    fn evaluate(&self, x: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::Dimension {
                chart: self.chart().name(),
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.check_domain(x)?;
        Ok(to_dmatrix(self.dim(), &self.components(x)))
    }

    fn evaluate_point(&self, p: &ChartPoint) -> Result<DMatrix<f64>, ModelError> {
        if p.chart() != self.chart() {
            return Err(domain(p.chart(), format!("model expects {}", self.chart().name())));
        }
        self.evaluate(&p.model_coords()?)
    }
}

/// `(dx₁² + .. + dx_n²)/x₁²`.
#[derive(Debug, Clone, Copy)]
pub struct UpperHalfReal {
    pub n: usize,
}

impl MetricModel for UpperHalfReal {
    fn chart(&self) -> Chart {
        Chart::UpperHalfReal(self.n)
    }
    fn components<D: Real>(&self, x: &[D]) -> Vec<D> {
        let n = self.n;
        let w = (x[0] * x[0]).recip();
        let mut g = vec![c::<D>(0.0); n * n];
        for i in 0..n {
            g[i * n + i] = w;
        }
        g
    }
    fn check_domain(&self, x: &[f64]) -> Result<(), ModelError> {
        if x[0] <= 0.0 {
            return Err(domain(self.chart(), format!("x1 = {} <= 0", x[0])));
        }
        Ok(())
    }
}

/// `dr² + cosh²(r)·|dξ|²/ξ₁²`: signed distance `r` to the wall and the
/// upper half-space model of the wall.
#[derive(Debug, Clone, Copy)]
pub struct RealFermi {
    pub n: usize,
}

impl MetricModel for RealFermi {
    fn chart(&self) -> Chart {
        Chart::RealFermi(self.n)
    }
    fn components<D: Real>(&self, x: &[D]) -> Vec<D> {
        let n = self.n;
        let ch = x[0].cosh();
        let w = ch * ch / (x[1] * x[1]);
        let mut g = vec![c::<D>(0.0); n * n];
        g[0] = c(1.0);
        for i in 1..n {
            g[i * n + i] = w;
        }
        g
    }
    fn check_domain(&self, x: &[f64]) -> Result<(), ModelError> {
        if x[1] <= 0.0 {
            return Err(domain(self.chart(), format!("xi1 = {} <= 0", x[1])));
        }
        Ok(())
    }
    fn normal_coordinate(&self) -> Option<usize> {
        Some(0)
    }
}

/// Siegel half-space metric `(df² + η²)/f² + Σ|dz_i|²/f` in `(f, v, Re z_i, Im z_i)`,
/// `η = dv + ½ Σ (a_i db_i − b_i da_i)`.
#[derive(Debug, Clone, Copy)]
pub struct Siegel {
    pub m: usize,
}

impl MetricModel for Siegel {
    fn chart(&self) -> Chart {
        Chart::Siegel(self.m)
    }
    fn components<D: Real>(&self, q: &[D]) -> Vec<D> {
        let dim = 2 * self.m;
        let f = q[0];
        let mut eta = vec![c::<D>(0.0); dim];
        eta[1] = c(1.0);
        for j in 0..self.m - 1 {
            let (a, b) = (q[2 + 2 * j], q[3 + 2 * j]);
            eta[2 + 2 * j] = -b * 0.5;
            eta[3 + 2 * j] = a * 0.5;
        }
        let f2 = (f * f).recip();
        let fi = f.recip();
        let mut g = vec![c::<D>(0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                g[i * dim + j] = eta[i] * eta[j] * f2;
            }
        }
        g[0] += f2;
        for i in 2..dim {
            g[i * dim + i] += fi;
        }
        g
    }
    fn check_domain(&self, q: &[f64]) -> Result<(), ModelError> {
        if q[0] <= 0.0 {
            return Err(domain(self.chart(), format!("f = {} <= 0", q[0])));
        }
        Ok(())
    }
}

/// Complex hyperbolic metric in distance-to-bisector coordinates `(s, τ, ρ, u)`.
#[derive(Debug, Clone, Copy)]
pub struct Bisector {
    pub m: usize,
}

/// Row layout of [`BisectorCoframe::rows`].
pub mod frame_row {
    pub const DS: usize = 0;
    /// `cosh²(s/2)cosh(ρ/2)ϑ₂`
    pub const VT2: usize = 1;
    /// `cosh(s/2) dρ`
    pub const DRHO: usize = 2;
    /// `cosh(s/2)sinh(ρ)ϑ₁`
    pub const VT1: usize = 3;
    /// First of the `2m−2` contact rows `2cosh(s/2)sinh(ρ/2)·(horizontal part of dy)`.
    pub const CONTACT: usize = 4;
}

/// Orthonormal coframe of the bisector-chart metric in coordinate differentials.
///
/// Rows are covectors of length `2m`. The contact rows are the components of
/// `2cosh(s/2)sinh(ρ/2)(dy − θ·iy)` in `R^{2m-2}`; they span the `2m−4`
/// contact directions. The metric is `Σ rows ⊗ rows`.
#[derive(Debug, Clone)]
pub struct BisectorCoframe<D> {
    pub rows: Vec<Vec<D>>,
    /// Contact form `θ = ⟨iy, dy⟩` on the sphere.
    pub theta: Vec<D>,
    /// `γ′` as a row-major `2m × 2m` matrix (sphere metric on `ker θ`).
    pub gamma_contact: Vec<D>,
}

pub fn bisector_coframe<D: Real>(m: usize, x: &[D]) -> BisectorCoframe<D> {
    let dim = 2 * m;
    let (s, rho) = (x[0], x[2]);
    let u = &x[3..];
    let k = 2 * m - 3;
    let y = sphere_point(m, u);
    let p = sphere_jacobian(m, u);
    let iy = mul_i(&y);
    let zero = c::<D>(0.0);

    let mut theta = vec![zero; dim];
    for l in 0..k {
        theta[3 + l] = (0..y.len()).fold(zero, |acc, j| acc + iy[j] * p[j][l]);
    }
    let t = (s * 0.5).tanh();
    let ch = (s * 0.5).cosh();
    let cr = (rho * 0.5).cosh();
    let sr = (rho * 0.5).sinh();

    let mut vt1 = theta.clone();
    vt1[1] += t / (cr * 2.0);
    let mut vt2: Vec<D> = theta.iter().map(|&th| th * sr * sr * t * 2.0 / cr).collect();
    vt2[1] += t * t + 1.0;

    let mut rows = Vec::with_capacity(4 + y.len());
    let mut ds = vec![zero; dim];
    ds[0] = c(1.0);
    rows.push(ds);
    rows.push(vt2.iter().map(|&v| v * ch * ch * cr).collect());
    let mut drho = vec![zero; dim];
    drho[2] = ch;
    rows.push(drho);
    rows.push(vt1.iter().map(|&v| v * ch * rho.sinh()).collect());

    let scale = ch * sr * 2.0;
    let mut horizontal = Vec::with_capacity(y.len());
    for j in 0..y.len() {
        let mut row = vec![zero; dim];
        for l in 0..k {
            row[3 + l] = p[j][l] - iy[j] * theta[3 + l];
        }
        horizontal.push(row.clone());
        rows.push(row.iter().map(|&v| v * scale).collect());
    }
    let gamma_contact = gram(&horizontal, dim);
    BisectorCoframe {
        rows,
        theta,
        gamma_contact,
    }
}

impl MetricModel for Bisector {
    fn chart(&self) -> Chart {
        Chart::Bisector(self.m)
    }
    fn components<D: Real>(&self, x: &[D]) -> Vec<D> {
        gram(&bisector_coframe(self.m, x).rows, 2 * self.m)
    }
    fn check_domain(&self, x: &[f64]) -> Result<(), ModelError> {
        if x[2] <= 0.0 {
            return Err(domain(self.chart(), format!("rho = {} <= 0 (axis degeneracy)", x[2])));
        }
        Ok(())
    }
    fn normal_coordinate(&self) -> Option<usize> {
        Some(0)
    }
}

/// Induced metric on the bisector `s = 0`,
/// `cosh²(ρ/2)dτ² + dρ² + sinh²(ρ)θ² + 4sinh²(ρ/2)γ′`, as a `2m × 2m` matrix
/// with zero `s` row and column.
pub fn bisector_slice_metric(m: usize, x: &[f64]) -> DMatrix<f64> {
    let dim = 2 * m;
    let fr = bisector_coframe::<f64>(m, x);
    let rho = x[2];
    let cr = (rho / 2.0).cosh();
    let sr = (rho / 2.0).sinh();
    let mut g = DMatrix::zeros(dim, dim);
    g[(1, 1)] += cr * cr;
    g[(2, 2)] += 1.0;
    for i in 0..dim {
        for j in 0..dim {
            g[(i, j)] += rho.sinh().powi(2) * fr.theta[i] * fr.theta[j] + 4.0 * sr * sr * fr.gamma_contact[i * dim + j];
        }
    }
    g
}

// ---------------------------------------------------------------------------
// chart maps

/// A smooth map between model coordinates of two charts.
pub trait ChartMap: Send + Sync {
    fn source(&self) -> Chart;
    fn target(&self) -> Chart;
    fn apply<D: Real>(&self, x: &[D]) -> Vec<D>;
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityMap(pub Chart);

impl ChartMap for IdentityMap {
    fn source(&self) -> Chart {
        self.0
    }
    fn target(&self) -> Chart {
        self.0
    }
    fn apply<D: Real>(&self, x: &[D]) -> Vec<D> {
        x.to_vec()
    }
}

/// `(s, τ, ρ, u) ↦ (f, v, Re z_i, Im z_i)` with
/// `z_m = e^{τ+iα}`, `z_i = e^{τ/2}·w·y_i`, `w = t e^{iα/2} = 2sinh(ρ/2)/(cosh(ρ/2) + i tanh(s/2))`.
#[derive(Debug, Clone, Copy)]
pub struct BisectorToSiegel {
    pub m: usize,
}

impl ChartMap for BisectorToSiegel {
    fn source(&self) -> Chart {
        Chart::Bisector(self.m)
    }
    fn target(&self) -> Chart {
        Chart::Siegel(self.m)
    }
    fn apply<D: Real>(&self, x: &[D]) -> Vec<D> {
        let z = bisector_to_holomorphic(self.m, x);
        holomorphic_to_siegel(self.m, &z)
    }
}

/// Holomorphic coordinates `(Re z₁, Im z₁, .., Re z_m, Im z_m)` of a bisector-chart point.
pub fn bisector_to_holomorphic<D: Real>(m: usize, x: &[D]) -> Vec<D> {
    let (s, tau, rho) = (x[0], x[1], x[2]);
    let y = sphere_point(m, &x[3..]);
    let t = (s * 0.5).tanh();
    let cr = (rho * 0.5).cosh();
    let sr = (rho * 0.5).sinh();
    let den = cr * cr + t * t;
    let wr = sr * cr * 2.0 / den;
    let wi = -sr * t * 2.0 / den;
    // arg w = atan(-T/C) because Re w > 0
    let alpha = (-t / cr).atan() * 2.0;
    let e = tau.exp();
    let eh = (tau * 0.5).exp();
    let mut z = Vec::with_capacity(2 * m);
    for j in 0..m - 1 {
        let (a, b) = (y[2 * j], y[2 * j + 1]);
        z.push(eh * (wr * a - wi * b));
        z.push(eh * (wr * b + wi * a));
    }
    z.push(e * alpha.cos());
    z.push(e * alpha.sin());
    z
}

/// `f = Re z_m − ¼Σ|z_i|²` on holomorphic coordinates.
pub fn siegel_defining_function(m: usize, z: &[f64]) -> f64 {
    let s: f64 = z[..2 * m - 2].iter().map(|v| v * v).sum();
    z[2 * m - 2] - 0.25 * s
}

pub fn holomorphic_to_siegel<D: Real>(m: usize, z: &[D]) -> Vec<D> {
    let zs = &z[..2 * m - 2];
    let f = z[2 * m - 2] - dot(zs, zs) * 0.25;
    let v = -z[2 * m - 1];
    let mut q = vec![f, v];
    q.extend_from_slice(zs);
    q
}

pub fn siegel_to_holomorphic<D: Real>(m: usize, q: &[D]) -> Vec<D> {
    let zs = &q[2..];
    let mut z = zs.to_vec();
    z.push(q[0] + dot(zs, zs) * 0.25);
    z.push(-q[1]);
    debug_assert_eq!(z.len(), 2 * m);
    z
}

/// `(r, ξ) ↦ (ξ₁/cosh r, ξ₂, .., ξ_{n-1}, ξ₁ tanh r)`.
#[derive(Debug, Clone, Copy)]
pub struct FermiToUpperHalf {
    pub n: usize,
}

impl ChartMap for FermiToUpperHalf {
    fn source(&self) -> Chart {
        Chart::RealFermi(self.n)
    }
    fn target(&self) -> Chart {
        Chart::UpperHalfReal(self.n)
    }
    fn apply<D: Real>(&self, x: &[D]) -> Vec<D> {
        let r = x[0];
        let xi1 = x[1];
        let mut out = vec![xi1 / r.cosh()];
        out.extend_from_slice(&x[2..]);
        out.push(xi1 * r.tanh());
        out
    }
}

/// The holomorphic inversion of the Siegel domain, `(z′, z_m) ↦ (z′/z_m, 1/z_m)`,
/// written on `(f, v, Re z_i, Im z_i)`.
#[derive(Debug, Clone, Copy)]
pub struct SiegelInversion {
    pub m: usize,
}

impl ChartMap for SiegelInversion {
    fn source(&self) -> Chart {
        Chart::Siegel(self.m)
    }
    fn target(&self) -> Chart {
        Chart::Siegel(self.m)
    }
    fn apply<D: Real>(&self, q: &[D]) -> Vec<D> {
        let z = siegel_to_holomorphic(self.m, q);
        holomorphic_to_siegel(self.m, &invert_holomorphic(self.m, &z))
    }
}

pub fn invert_holomorphic<D: Real>(m: usize, z: &[D]) -> Vec<D> {
    let (zr, zi) = (z[2 * m - 2], z[2 * m - 1]);
    let n2 = zr * zr + zi * zi;
    let (ir, ii) = (zr / n2, -zi / n2);
    let mut out = Vec::with_capacity(2 * m);
    for j in 0..m - 1 {
        let (a, b) = (z[2 * j], z[2 * j + 1]);
        out.push(a * ir - b * ii);
        out.push(a * ii + b * ir);
    }
    out.push(ir);
    out.push(ii);
    out
}

/// `(s, τ, ρ, u) ↦ (−s, −τ, ρ, u)`.
#[derive(Debug, Clone, Copy)]
pub struct BisectorInversion {
    pub m: usize,
}

impl ChartMap for BisectorInversion {
    fn source(&self) -> Chart {
        Chart::Bisector(self.m)
    }
    fn target(&self) -> Chart {
        Chart::Bisector(self.m)
    }
    fn apply<D: Real>(&self, x: &[D]) -> Vec<D> {
        let mut out = x.to_vec();
        out[0] = -x[0];
        out[1] = -x[1];
        out
    }
}

/// `x_n ↦ −x_n`.
#[derive(Debug, Clone, Copy)]
pub struct UpperHalfInversion {
    pub n: usize,
}

impl ChartMap for UpperHalfInversion {
    fn source(&self) -> Chart {
        Chart::UpperHalfReal(self.n)
    }
    fn target(&self) -> Chart {
        Chart::UpperHalfReal(self.n)
    }
    fn apply<D: Real>(&self, x: &[D]) -> Vec<D> {
        let mut out = x.to_vec();
        out[self.n - 1] = -x[self.n - 1];
        out
    }
}

/// `r ↦ −r`.
#[derive(Debug, Clone, Copy)]
pub struct FermiInversion {
    pub n: usize,
}

impl ChartMap for FermiInversion {
    fn source(&self) -> Chart {
        Chart::RealFermi(self.n)
    }
    fn target(&self) -> Chart {
        Chart::RealFermi(self.n)
    }
    fn apply<D: Real>(&self, x: &[D]) -> Vec<D> {
        let mut out = x.to_vec();
        out[0] = -x[0];
        out
    }
}

// ---------------------------------------------------------------------------
// point-level operations

fn expect_chart(p: &ChartPoint, want: fn(usize) -> Chart) -> Result<usize, ModelError> {
    let k = match p.chart() {
        Chart::UpperHalfReal(k) | Chart::RealFermi(k) | Chart::Siegel(k) | Chart::Bisector(k) | Chart::UVRho(k) => k,
    };
    if p.chart() != want(k) {
        return Err(domain(p.chart(), format!("expected a {} point", want(k).name())));
    }
    Ok(k)
}

pub fn metric_upper_half_real(p: &ChartPoint) -> Result<DMatrix<f64>, ModelError> {
    let n = expect_chart(p, Chart::UpperHalfReal)?;
    UpperHalfReal { n }.evaluate_point(p)
}

pub fn metric_real_fermi(p: &ChartPoint) -> Result<DMatrix<f64>, ModelError> {
    let n = expect_chart(p, Chart::RealFermi)?;
    RealFermi { n }.evaluate_point(p)
}

pub fn metric_siegel(p: &ChartPoint) -> Result<DMatrix<f64>, ModelError> {
    let m = expect_chart(p, Chart::Siegel)?;
    Siegel { m }.evaluate_point(p)
}

pub fn metric_bisector(p: &ChartPoint) -> Result<DMatrix<f64>, ModelError> {
    let m = expect_chart(p, Chart::Bisector)?;
    Bisector { m }.evaluate_point(p)
}

pub fn bisector_to_siegel(p: &ChartPoint) -> Result<ChartPoint, ModelError> {
    let m = expect_chart(p, Chart::Bisector)?;
    let x = p.model_coords()?;
    ChartPoint::new(Chart::Siegel(m), bisector_to_holomorphic(m, &x))
}

pub fn real_fermi_to_upper_half(p: &ChartPoint) -> Result<ChartPoint, ModelError> {
    let n = expect_chart(p, Chart::RealFermi)?;
    ChartPoint::new(Chart::UpperHalfReal(n), FermiToUpperHalf { n }.apply(p.coords()))
}

pub fn inversion(p: &ChartPoint) -> Result<ChartPoint, ModelError> {
    let c0 = p.coords();
    match p.chart() {
        Chart::UpperHalfReal(n) => ChartPoint::new(p.chart(), UpperHalfInversion { n }.apply(c0)),
        Chart::RealFermi(n) => ChartPoint::new(p.chart(), FermiInversion { n }.apply(c0)),
        Chart::Siegel(m) => ChartPoint::new(p.chart(), invert_holomorphic(m, c0)),
        Chart::Bisector(_) => {
            let mut out = c0.to_vec();
            out[0] = -out[0];
            out[1] = -out[1];
            ChartPoint::new(p.chart(), out)
        }
        Chart::UVRho(_) => Err(domain(p.chart(), "inversion is not defined on (u, v, varrho)")),
    }
}

/// `(s, τ, ρ, y) ↦ (u, v, ϱ, y)` with `1/u = cosh²(s/2)`, `1/v = cosh(ρ/2)`, `ϱ = e^{−2τ}`.
pub fn uv_dictionary(p: &ChartPoint) -> Result<ChartPoint, ModelError> {
    let m = expect_chart(p, Chart::Bisector)?;
    let x = p.coords();
    let mut out = vec![
        1.0 / (x[0] / 2.0).cosh().powi(2),
        1.0 / (x[2] / 2.0).cosh(),
        (-2.0 * x[1]).exp(),
    ];
    out.extend_from_slice(&x[3..]);
    ChartPoint::new(Chart::UVRho(m), out)
}

/// Inverse of [`uv_dictionary`] on the half `s ≥ 0`.
pub fn uv_dictionary_inverse(p: &ChartPoint) -> Result<ChartPoint, ModelError> {
    let m = expect_chart(p, Chart::UVRho)?;
    let x = p.coords();
    let s = 2.0 * (1.0 / x[0].sqrt()).acosh();
    let rho = 2.0 * (1.0 / x[1]).acosh();
    let tau = -0.5 * x[2].ln();
    ChartPoint::bisector(m, s, tau, rho, &x[3..])
}

/// Complex structure on the bisector chart as a `2m × 2m` matrix acting on
/// tangent vectors in `(s, τ, ρ, u)` coordinates.
///
/// On the orthonormal coframe `J` sends the `ds` direction to the `ϑ₂` direction,
/// the `dρ` direction to the `ϑ₁` direction, and acts as `i` on the contact rows.
/// With `(Jα)(X) = −α(JX)` on covectors this is `J ds = cosh²(s/2)cosh(ρ/2)ϑ₂`,
/// `J dρ = sinh(ρ)ϑ₁`.
pub fn complex_structure_j(m: usize, x: &[f64]) -> Result<DMatrix<f64>, ModelError> {
    Bisector { m }.check_domain(x)?;
    let dim = 2 * m;
    let fr = bisector_coframe::<f64>(m, x);
    let rows = fr.rows.len();
    let a = DMatrix::from_fn(rows, dim, |i, j| fr.rows[i][j]);
    let mut jm = DMatrix::<f64>::zeros(rows, rows);
    jm[(frame_row::VT2, frame_row::DS)] = 1.0;
    jm[(frame_row::DS, frame_row::VT2)] = -1.0;
    jm[(frame_row::VT1, frame_row::DRHO)] = 1.0;
    jm[(frame_row::DRHO, frame_row::VT1)] = -1.0;
    for j in 0..m - 1 {
        let (ra, rb) = (frame_row::CONTACT + 2 * j, frame_row::CONTACT + 2 * j + 1);
        jm[(ra, rb)] = -1.0;
        jm[(rb, ra)] = 1.0;
    }
    let g = a.transpose() * &a;
    let ginv = g
        .try_inverse()
        .ok_or_else(|| domain(Chart::Bisector(m), "singular metric"))?;
    Ok(ginv * a.transpose() * jm * a)
}

// ---------------------------------------------------------------------------
// sampling

/// Coordinate ranges for random sampling, kept away from chart degeneracies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingBox {
    /// `|s| ≤ s_max` (bisector distance) and `|r| ≤ s_max` (real Fermi distance).
    pub s_max: f64,
    pub rho: (f64, f64),
    pub tau_max: f64,
    /// Bound on stereographic parameters; the `m = 2` angle stays `0.1` from `±π`.
    pub sphere_max: f64,
    /// Range of `x₁`, `ξ₁` and `f`.
    pub height: (f64, f64),
    /// Bound on the remaining coordinates.
    pub lateral_max: f64,
}

impl Default for SamplingBox {
    fn default() -> Self {
        Self {
            s_max: 5.0,
            rho: (0.1, 5.0),
            tau_max: 1.0,
            sphere_max: 1.5,
            height: (0.2, 3.0),
            lateral_max: 2.0,
        }
    }
}

impl SamplingBox {
    pub fn with_rho_max(mut self, rho_max: f64) -> Self {
        self.rho.1 = rho_max;
        self
    }

    pub fn describe(&self) -> String {
        format!(
            "|s| <= {}, rho in [{}, {}], |tau| <= {}, sphere params <= {}, height in [{}, {}], lateral <= {}",
            self.s_max,
            self.rho.0,
            self.rho.1,
            self.tau_max,
            self.sphere_max,
            self.height.0,
            self.height.1,
            self.lateral_max
        )
    }

    /// Random valid model coordinates in `chart`.
    pub fn sample<R: Rng>(&self, chart: Chart, rng: &mut R) -> Vec<f64> {
        let sym = |rng: &mut R, a: f64| rng.random_range(-a..a);
        match chart {
            Chart::UpperHalfReal(n) => {
                let mut x = vec![rng.random_range(self.height.0..self.height.1)];
                x.extend((1..n).map(|_| sym(rng, self.lateral_max)));
                x
            }
            Chart::RealFermi(n) => {
                let mut x = vec![sym(rng, self.s_max), rng.random_range(self.height.0..self.height.1)];
                x.extend((2..n).map(|_| sym(rng, self.lateral_max)));
                x
            }
            Chart::Bisector(m) => {
                let mut x = vec![
                    sym(rng, self.s_max),
                    sym(rng, self.tau_max),
                    rng.random_range(self.rho.0..self.rho.1),
                ];
                if m == 2 {
                    x.push(sym(rng, std::f64::consts::PI - 0.1));
                } else {
                    x.extend((0..2 * m - 3).map(|_| sym(rng, self.sphere_max)));
                }
                x
            }
            Chart::Siegel(m) => {
                let mut q = vec![
                    rng.random_range(self.height.0..self.height.1),
                    sym(rng, self.lateral_max),
                ];
                q.extend((0..2 * m - 2).map(|_| sym(rng, self.lateral_max)));
                q
            }
            Chart::UVRho(m) => {
                let mut x = vec![rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)];
                x.push(rng.random_range(self.height.0..self.height.1));
                let k = if m == 2 { 1 } else { 2 * m - 3 };
                let u: Vec<f64> = (0..k).map(|_| sym(rng, self.sphere_max)).collect();
                x.extend(sphere_point(m, &u));
                x
            }
        }
    }
}

/// [`SamplingBox::sample`] with the default box.
pub fn sample_model_coords<R: Rng>(chart: Chart, rng: &mut R) -> Vec<f64> {
    SamplingBox::default().sample(chart, rng)
}

/// Observed exponent `∂ log f / ∂τ` of the Siegel defining function along the bisector chart.
///
/// Analytically `f = e^{τ}/(cosh²(s/2)(cosh²(ρ/2) + tanh²(s/2)))` with `z_m = e^{τ+iα}`.
pub fn observed_tau_exponent(m: usize, x: &[f64]) -> f64 {
    use num_dual::Dual64;
    let xd: Vec<Dual64> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let d = Dual64::from_re(v);
            if i == 1 {
                d.derivative()
            } else {
                d
            }
        })
        .collect();
    let q = BisectorToSiegel { m }.apply(&xd);
    q[0].eps / q[0].re
}

/// Closed form of the defining function on the bisector chart for a given τ exponent.
pub fn defining_function_closed(x: &[f64], tau_exponent: f64) -> f64 {
    let (s, tau, rho) = (x[0], x[1], x[2]);
    let t = (s / 2.0).tanh();
    (tau_exponent * tau).exp() / ((s / 2.0).cosh().powi(2) * ((rho / 2.0).cosh().powi(2) + t * t))
}

/// Measured departure of the pulled-back `du²` coefficient from `1/((1−u)u²)`
/// in the `(u, v, ϱ)` dictionary, returned as `|g_uu (1−u) u² − 1|` at an `s > 0` point.
pub fn uv_normal_term_defect(m: usize, x: &[f64]) -> f64 {
    // g(∂_u, ∂_u) = g_ss (ds/du)², ds/du = −1/(u sqrt(1−u)) for s > 0
    let g = Bisector { m }.components::<f64>(x);
    let u = 1.0 / (x[0] / 2.0).cosh().powi(2);
    let dsdu = -1.0 / (u * (1.0 - u).sqrt());
    (g[0] * dsdu * dsdu * (1.0 - u) * u * u - 1.0).abs()
}

/// Sup over the coordinate entries of the remainder in the large-ρ corrected frame form
/// `ds² + cosh⁴(s/2)cosh²(ρ/2)ϑ₂² + cosh²(s/2)(dρ² + sinh²(ρ/2)(dτ² + 4γ′))`,
/// multiplied by `cosh²(s/2)` (the remainder is expected to stay bounded).
pub fn corrected_frame_remainder(m: usize, x: &[f64]) -> f64 {
    let dim = 2 * m;
    let fr = bisector_coframe::<f64>(m, x);
    let g = gram(&fr.rows, dim);
    let (s, rho) = (x[0], x[2]);
    let ch2 = (s / 2.0).cosh().powi(2);
    let sr2 = (rho / 2.0).sinh().powi(2);
    let mut approx = vec![0.0; dim * dim];
    let r1 = &fr.rows[frame_row::VT2];
    for i in 0..dim {
        for j in 0..dim {
            approx[i * dim + j] = r1[i] * r1[j] + ch2 * 4.0 * sr2 * fr.gamma_contact[i * dim + j];
        }
    }
    approx[0] += 1.0;
    approx[2 * dim + 2] += ch2;
    approx[dim + 1] += ch2 * sr2;
    g.iter()
        .zip(&approx)
        .map(|(a, b)| (a - b).abs() * ch2)
        .fold(0.0, f64::max)
}
