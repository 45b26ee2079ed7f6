//! Double weights on half-spaces and the positivity of `−Δ log w − |d log w|²`.
//!
//! Real case, on the Fermi chart `(r, ξ)` of the half-space of dimension `n`:
//! `w = cosh(r)^{δ₁} cosh(ρ)^{δ₂}`, with `ρ` the distance in the slice to the base
//! point `ξ = (1, 0, .., 0)`, `cosh ρ = 1 + |ξ − e₁|²/(2ξ₁)`.
//!
//! Complex case, on the bisector chart:
//! `w = cosh(s/2)^{2δ₁}(cosh²(ρ/2)cosh(τ/2))^{δ₂}`.
//!
//! The functional splits into orthogonal line contributions. With
//! `p = tanh²(s/2)`, `ϖ = tanh²(ρ/2)`, `t = tanh²(τ/2)`:
//!
//! ```text
//! real     u₁ = δ₁(1 + (n−2−δ₁) tanh²s)
//!          u₂ = δ₂/cosh²s · ((n−1) − (1+δ₂) tanh²ρ)
//! complex  u₁ = δ₁(½ + (m−½−δ₁)p + p(1−p)(1−ϖ)/(1+p(1−ϖ)))
//!          u₂ = δ₂(1−p)(m−1 + (½−δ₂)ϖ − pϖ(1−ϖ)/(1+p(1−ϖ)))
//!          u₃ = (δ₂/4)|dτ|²((1−t) − δ₂ t),
//!          |dτ|² = (1−p)(1−ϖ)(1−p(1−ϖ))/(1+p(1−ϖ))²
//! ```
//!
//! `u₃` is affine in `t`, so its range over all `τ` is spanned by `t = 0` and the
//! limit `t → 1`, where it reduces to `−δ₂²|dτ|²/4`.

use crate::models::{Bisector, MetricModel, Real, RealFermi};
use crate::tensor::{gradient_inner, gradient_norm_sq, laplace_beltrami, DerivativeRoute, ScalarField, TensorError};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("weight out of range: {0}")]
    Range(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind {
    Real(usize),
    Complex(usize),
}

impl WeightKind {
    /// `𝓗 = n − 1` (real) or `m` (complex).
    pub fn hcal(self) -> f64 {
        match self {
            WeightKind::Real(n) => n as f64 - 1.0,
            WeightKind::Complex(m) => m as f64,
        }
    }

    /// Largest admissible `δ₂`.
    pub fn delta2_max(self) -> f64 {
        match self {
            WeightKind::Real(n) => n as f64 - 2.0,
            WeightKind::Complex(2) => 1.25,
            WeightKind::Complex(m) => m as f64 - 0.5,
        }
    }

    pub fn label(self) -> String {
        match self {
            WeightKind::Real(n) => format!("real(n={n})"),
            WeightKind::Complex(m) => format!("complex(m={m})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub delta1: f64,
    pub delta2: f64,
}

impl WeightSpec {
    pub fn new(kind: WeightKind, delta1: f64, delta2: f64) -> Self {
        Self { kind, delta1, delta2 }
    }

    fn check_dimension(&self) -> Result<(), WeightError> {
        match self.kind {
            WeightKind::Real(n) if n < 3 => Err(WeightError::Range(format!(
                "real dimension n >= 3 required, got n = {n}"
            ))),
            WeightKind::Complex(m) if m < 2 => Err(WeightError::Range(format!(
                "complex dimension m >= 2 required, got m = {m}"
            ))),
            _ => Ok(()),
        }
    }

    /// The `δ₂` hypothesis alone.
    pub fn check_delta2(&self) -> Result<(), WeightError> {
        self.check_dimension()?;
        let d2 = self.delta2;
        match self.kind {
            WeightKind::Real(n) if !(0.0..=n as f64 - 2.0).contains(&d2) => Err(WeightError::Range(format!(
                "0 <= delta2 <= n-2 (n = {n}) violated by delta2 = {d2}"
            ))),
            WeightKind::Complex(m) if !(0.0..=m as f64 - 0.5).contains(&d2) => Err(WeightError::Range(format!(
                "0 <= delta2 <= m-1/2 (m = {m}) violated by delta2 = {d2}"
            ))),
            WeightKind::Complex(2) if d2 > 1.25 => Err(WeightError::Range(format!(
                "delta2 <= 5/4 when m = 2 violated by delta2 = {d2}"
            ))),
            _ => Ok(()),
        }
    }

    /// Full admissibility; the error names the violated inequality.
    pub fn check_admissible(&self) -> Result<(), WeightError> {
        self.check_dimension()?;
        let d1 = self.delta1;
        let h = self.kind.hcal();
        if !(d1 > 0.0 && d1 < h) {
            let ineq = match self.kind {
                WeightKind::Real(n) => format!("0 < delta1 < n-1 (n = {n})"),
                WeightKind::Complex(m) => format!("0 < delta1 < m (m = {m})"),
            };
            return Err(WeightError::Range(format!("{ineq} violated by delta1 = {d1}")));
        }
        self.check_delta2()
    }
}

/// `cosh ρ` of the slice point `ξ` relative to `e₁`.
fn slice_cosh_rho<D: Real>(xi: &[D]) -> D {
    let mut d2 = (xi[0] - 1.0) * (xi[0] - 1.0);
    for v in &xi[1..] {
        d2 += *v * *v;
    }
    d2 / (xi[0] * 2.0) + 1.0
}

/// `log w` as a scalar field on the model coordinates of the matching chart.
#[derive(Debug, Clone, Copy)]
pub struct LogWeight(pub WeightSpec);

impl ScalarField for LogWeight {
    fn eval<D: Real>(&self, x: &[D]) -> D {
        let WeightSpec { kind, delta1, delta2 } = self.0;
        match kind {
            WeightKind::Real(_) => x[0].cosh().ln() * delta1 + slice_cosh_rho(&x[1..]).ln() * delta2,
            WeightKind::Complex(_) => {
                (x[0] * 0.5).cosh().ln() * (2.0 * delta1)
                    + ((x[2] * 0.5).cosh().ln() * 2.0 + (x[1] * 0.5).cosh().ln()) * delta2
            }
        }
    }
}

/// `w` as a scalar field.
#[derive(Debug, Clone, Copy)]
pub struct Weight(pub WeightSpec);

impl ScalarField for Weight {
    fn eval<D: Real>(&self, x: &[D]) -> D {
        LogWeight(self.0).eval(x).exp()
    }
}

/// `w` at model coordinates (Fermi chart for real specs, bisector chart for complex).
pub fn weight_value(spec: &WeightSpec, x: &[f64]) -> f64 {
    Weight(*spec).eval(x)
}

/// Coordinates `(p, ϖ, t)` or `(tanh²s, tanh²ρ)` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCoordinates {
    /// `tanh²s` (real) or `tanh²(s/2)` (complex).
    pub a: f64,
    /// `tanh²ρ` (real) or `tanh²(ρ/2)` (complex).
    pub b: f64,
    /// `tanh²(τ/2)`; zero in the real case.
    pub t: f64,
}

pub fn line_coordinates(spec: &WeightSpec, x: &[f64]) -> LineCoordinates {
    match spec.kind {
        WeightKind::Real(_) => {
            let c = slice_cosh_rho(&x[1..]);
            LineCoordinates {
                a: x[0].tanh().powi(2),
                b: 1.0 - 1.0 / (c * c),
                t: 0.0,
            }
        }
        WeightKind::Complex(_) => LineCoordinates {
            a: (x[0] / 2.0).tanh().powi(2),
            b: (x[2] / 2.0).tanh().powi(2),
            t: (x[1] / 2.0).tanh().powi(2),
        },
    }
}

/// The three line contributions `(u₁, u₂, u₃)`; `u₃ = 0` in the real case.
pub fn line_terms(spec: &WeightSpec, c: LineCoordinates) -> (f64, f64, f64) {
    let (d1, d2) = (spec.delta1, spec.delta2);
    let LineCoordinates { a, b, t } = c;
    match spec.kind {
        WeightKind::Real(n) => {
            let n = n as f64;
            (
                d1 * (1.0 + (n - 2.0 - d1) * a),
                d2 * (1.0 - a) * ((n - 1.0) - (1.0 + d2) * b),
                0.0,
            )
        }
        WeightKind::Complex(m) => {
            let m = m as f64;
            let q = 1.0 + a * (1.0 - b);
            let u1 = d1 * (0.5 + (m - 0.5 - d1) * a + a * (1.0 - a) * (1.0 - b) / q);
            let u2 = d2 * (1.0 - a) * (m - 1.0 + (0.5 - d2) * b - a * b * (1.0 - b) / q);
            (u1, u2, 0.25 * d2 * dtau_norm_sq(a, b) * ((1.0 - t) - d2 * t))
        }
    }
}

/// `|dτ|²` on the bisector chart in terms of `p` and `ϖ`.
pub fn dtau_norm_sq(p: f64, w: f64) -> f64 {
    let q = 1.0 + p * (1.0 - w);
    (1.0 - p) * (1.0 - w) * (1.0 - p * (1.0 - w)) / (q * q)
}

/// Closed form of `−Δ log w − |d log w|²` at model coordinates `x`.
pub fn weight_functional_closed(spec: &WeightSpec, x: &[f64]) -> f64 {
    let (u1, u2, u3) = line_terms(spec, line_coordinates(spec, x));
    u1 + u2 + u3
}

/// Line contributions in their published form: the real `u₂` line reads
/// `δ₂/cosh²s · (1 + (n−3−δ₂)tanh²ρ)` and the complex `u₃` line is `−δ₂²|dτ|²/4`
/// at every `τ`.
pub fn line_terms_printed(spec: &WeightSpec, c: LineCoordinates) -> (f64, f64, f64) {
    let (u1, u2, _) = line_terms(spec, c);
    let d2 = spec.delta2;
    match spec.kind {
        WeightKind::Real(n) => {
            let n = n as f64;
            (u1, d2 * (1.0 - c.a) * (1.0 + (n - 3.0 - d2) * c.b), 0.0)
        }
        WeightKind::Complex(_) => (u1, u2, -0.25 * d2 * d2 * dtau_norm_sq(c.a, c.b)),
    }
}

pub fn weight_functional_printed(spec: &WeightSpec, x: &[f64]) -> f64 {
    let (u1, u2, u3) = line_terms_printed(spec, line_coordinates(spec, x));
    u1 + u2 + u3
}

fn with_model<T>(spec: &WeightSpec, real: impl FnOnce(&RealFermi) -> T, complex: impl FnOnce(&Bisector) -> T) -> T {
    match spec.kind {
        WeightKind::Real(n) => real(&RealFermi { n }),
        WeightKind::Complex(m) => complex(&Bisector { m }),
    }
}

fn functional_on<M: MetricModel>(
    model: &M,
    spec: &WeightSpec,
    x: &[f64],
    route: DerivativeRoute,
) -> Result<f64, TensorError> {
    let lw = LogWeight(*spec);
    Ok(-laplace_beltrami(model, &lw, x, route)? - gradient_norm_sq(model, &lw, x, route)?)
}

/// `−Δ log w − |d log w|²` from the tensor engine on the matching exact metric.
pub fn weight_functional_numeric(spec: &WeightSpec, x: &[f64], route: DerivativeRoute) -> Result<f64, WeightError> {
    Ok(with_model(
        spec,
        |m| functional_on(m, spec, x, route),
        |m| functional_on(m, spec, x, route),
    )?)
}

struct Product<'a, A, B>(&'a A, &'a B);

impl<A: ScalarField, B: ScalarField> ScalarField for Product<'_, A, B> {
    fn eval<D: Real>(&self, x: &[D]) -> D {
        self.0.eval(x) * self.1.eval(x)
    }
}

fn identity_residual_on<M: MetricModel, F: ScalarField>(
    model: &M,
    spec: &WeightSpec,
    f: &F,
    x: &[f64],
    route: DerivativeRoute,
) -> Result<f64, TensorError> {
    let w = Weight(*spec);
    let wf = Product(&w, f);
    let lw = LogWeight(*spec);
    let wv = w.eval(x);
    let lhs = wv * laplace_beltrami(model, f, x, route)?;
    let rhs = laplace_beltrami(model, &wf, x, route)?
        + weight_functional_closed(spec, x) * wv * f.eval(x)
        + 2.0 * gradient_inner(model, &lw, &wf, x, route)?;
    Ok((lhs - rhs).abs())
}

/// `|wΔf − Δ(wf) − (−Δlog w − |dlog w|²)wf − 2⟨dlog w, d(wf)⟩|` with the
/// functional taken from its closed form.
pub fn identity_residual<F: ScalarField>(
    spec: &WeightSpec,
    f: &F,
    x: &[f64],
    route: DerivativeRoute,
) -> Result<f64, WeightError> {
    Ok(with_model(
        spec,
        |m| identity_residual_on(m, spec, f, x, route),
        |m| identity_residual_on(m, spec, f, x, route),
    )?)
}

/// Grid-scan positivity certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub spec: WeightSpec,
    pub infimum: f64,
    /// Named coordinates of the minimising node.
    pub argmin: Vec<(String, f64)>,
    pub resolution: f64,
    pub epsilon: f64,
    pub nodes: usize,
    pub domain: String,
    /// Infimum over the closed box including the limiting edges `a = 1`, `b = 1`.
    pub closed_box_infimum: f64,
    /// Constant added to the functional before the scan.
    pub shift: f64,
    pub pass: bool,
}

/// Boundary offset of the scan box `[0, 1 − ε]²`.
pub const SCAN_EPSILON: f64 = 1e-3;

fn axis(resolution: f64, upper: f64) -> Vec<f64> {
    let steps = (upper / resolution).ceil() as usize;
    (0..=steps)
        .map(|k| if k == steps { upper } else { k as f64 * resolution })
        .collect()
}

fn scan(spec: &WeightSpec, resolution: f64, shift: f64) -> ScanReport {
    let complex = matches!(spec.kind, WeightKind::Complex(_));
    let ts: &[f64] = if complex { &[0.0, 1.0] } else { &[0.0] };
    let eval = |a: f64, b: f64| -> (f64, f64) {
        ts.iter()
            .map(|&t| {
                let (u1, u2, u3) = line_terms(spec, LineCoordinates { a, b, t });
                (u1 + u2 + u3 + shift, t)
            })
            .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc })
    };
    let min_over = |xs: &[f64], ys: &[f64]| -> (f64, f64, f64, f64) {
        let best = xs
            .par_iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut best = (f64::INFINITY, a, 0.0, 0.0, i, 0usize);
                for (j, &b) in ys.iter().enumerate() {
                    let (v, t) = eval(a, b);
                    if v < best.0 {
                        best = (v, a, b, t, i, j);
                    }
                }
                best
            })
            // ties resolve to the lowest index so the argmin is deterministic
            .reduce(
                || (f64::INFINITY, 0.0, 0.0, 0.0, usize::MAX, usize::MAX),
                |x, y| {
                    if y.0 < x.0 || (y.0 == x.0 && (y.4, y.5) < (x.4, x.5)) {
                        y
                    } else {
                        x
                    }
                },
            );
        (best.0, best.1, best.2, best.3)
    };
    let grid = axis(resolution, 1.0 - SCAN_EPSILON);
    let (inf, a, b, t) = min_over(&grid, &grid);
    let closed_grid = axis(resolution, 1.0);
    let (edge_a, ..) = min_over(&[1.0], &closed_grid);
    let (edge_b, ..) = min_over(&closed_grid, &[1.0]);
    let closed = inf.min(edge_a).min(edge_b);
    let (na, nb) = if complex {
        ("p", "varpi")
    } else {
        ("tanh^2 s", "tanh^2 rho")
    };
    let mut argmin = vec![(na.to_string(), a), (nb.to_string(), b)];
    let mut domain = format!("({na}, {nb}) in [0, 1 - {SCAN_EPSILON}]^2");
    if complex {
        argmin.push(("tanh^2(tau/2)".to_string(), t));
        domain.push_str(", tanh^2(tau/2) in {0, 1}");
    }
    ScanReport {
        spec: *spec,
        infimum: inf,
        argmin,
        resolution,
        epsilon: SCAN_EPSILON,
        nodes: grid.len() * grid.len() * ts.len(),
        domain,
        closed_box_infimum: closed,
        shift,
        pass: inf > 0.0,
    }
}

/// Scan the closed form over the box at the given grid spacing.
pub fn certify_positivity(spec: &WeightSpec, resolution: f64) -> Result<ScanReport, WeightError> {
    spec.check_admissible()?;
    check_resolution(resolution)?;
    Ok(scan(spec, resolution, 0.0))
}

fn check_resolution(resolution: f64) -> Result<(), WeightError> {
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(WeightError::Range(format!(
            "scan resolution must lie in (0, 0.5], got {resolution}"
        )));
    }
    Ok(())
}

/// Outcome of the shifted-operator check.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedReport {
    pub lambda: f64,
    pub interval: (f64, f64),
    pub delta1_inside: bool,
    pub scan: ScanReport,
    pub pass: bool,
}

/// `δ₁ ∈ ]𝓗/2 − √(𝓗²/4+λ), 𝓗/2 + √(𝓗²/4+λ)[` and positivity of the functional plus `λ`.
/// Only the `δ₂` hypothesis is enforced.
pub fn shifted_interval(spec: &WeightSpec, lambda: f64, resolution: f64) -> Result<ShiftedReport, WeightError> {
    if lambda < 0.0 {
        return Err(WeightError::Unsupported(format!(
            "lambda = {lambda} < 0 is outside the supported regime"
        )));
    }
    spec.check_delta2()?;
    check_resolution(resolution)?;
    let h = spec.kind.hcal();
    let r = (h * h / 4.0 + lambda).sqrt();
    let interval = (h / 2.0 - r, h / 2.0 + r);
    let inside = spec.delta1 > interval.0 && spec.delta1 < interval.1;
    let scan = scan(spec, resolution, lambda);
    let pass = inside && scan.pass;
    Ok(ShiftedReport {
        lambda,
        interval,
        delta1_inside: inside,
        scan,
        pass,
    })
}

/// `δ₁(𝓗 − δ₁)`, the large-`s` limit of the functional.
pub fn large_s_limit(spec: &WeightSpec) -> f64 {
    spec.delta1 * (spec.kind.hcal() - spec.delta1)
}

/// `k × k` admissible grid: `δ₁ = 𝓗·i/(k+1)`, `δ₂ = max·j/(k−1)`.
pub fn admissible_grid(kind: WeightKind, k: usize) -> Vec<WeightSpec> {
    let h = kind.hcal();
    let d2max = kind.delta2_max();
    let mut out = Vec::with_capacity(k * k);
    for i in 1..=k {
        for j in 0..k {
            let d2 = if k > 1 { d2max * j as f64 / (k - 1) as f64 } else { 0.0 };
            out.push(WeightSpec::new(kind, h * i as f64 / (k + 1) as f64, d2));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trivial_weight_is_one() {
        let s = WeightSpec::new(WeightKind::Complex(2), 0.0, 0.0);
        assert_eq!(weight_value(&s, &[0.3, -1.0, 2.0, 0.4]), 1.0);
        let s = WeightSpec::new(WeightKind::Real(4), 1.0, 2.0);
        assert_eq!(weight_value(&s, &[0.0, 1.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn closed_form_examples() {
        let s = WeightSpec::new(WeightKind::Real(4), 1.0, 0.0);
        assert_abs_diff_eq!(
            weight_functional_closed(&s, &[0.0, 1.3, 0.2, 0.1]),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            weight_functional_closed(&s, &[20.0, 1.3, 0.2, 0.1]),
            2.0,
            epsilon = 1e-12
        );
        let s = WeightSpec::new(WeightKind::Complex(2), 1.0, 0.0);
        assert_abs_diff_eq!(
            weight_functional_closed(&s, &[0.0, 0.0, 0.0, 0.0]),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn printed_slice_line_differs_at_origin() {
        let s = WeightSpec::new(WeightKind::Real(4), 0.0, 1.0);
        let x = [0.0, 1.0, 0.0, 0.0];
        assert_abs_diff_eq!(weight_functional_closed(&s, &x), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(weight_functional_printed(&s, &x), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn range_errors_name_the_inequality() {
        let s = WeightSpec::new(WeightKind::Real(4), 3.5, 1.0);
        let e = certify_positivity(&s, 0.01).unwrap_err().to_string();
        assert!(e.contains("0 < delta1 < n-1"), "{e}");
        let s = WeightSpec::new(WeightKind::Complex(2), 1.0, 1.3);
        let e = certify_positivity(&s, 0.01).unwrap_err().to_string();
        assert!(e.contains("5/4"), "{e}");
    }

    #[test]
    fn scan_examples() {
        let r = certify_positivity(&WeightSpec::new(WeightKind::Real(4), 1.0, 1.0), 1e-2).unwrap();
        assert!(r.pass && r.infimum >= 1.0 - 1e-6, "{r:?}");
        let r = certify_positivity(&WeightSpec::new(WeightKind::Complex(2), 1.0, 1.25), 1e-2).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.closed_box_infimum <= r.infimum);
    }

    #[test]
    fn shifted_examples() {
        let s = WeightSpec::new(WeightKind::Real(4), 3.5, 1.0);
        let r = shifted_interval(&s, 4.0, 1e-2).unwrap();
        assert_abs_diff_eq!(r.interval.0, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.interval.1, 4.0, epsilon = 1e-15);
        assert!(r.pass);
        let r = shifted_interval(&WeightSpec::new(WeightKind::Real(4), 1.0, 1.0), 0.0, 1e-2).unwrap();
        assert_eq!(r.interval, (0.0, 3.0));
        assert!(matches!(
            shifted_interval(&s, -1.0, 1e-2),
            Err(WeightError::Unsupported(_))
        ));
    }

    #[test]
    fn grid_is_admissible() {
        for kind in [WeightKind::Real(3), WeightKind::Complex(2), WeightKind::Complex(3)] {
            for s in admissible_grid(kind, 5) {
                s.check_admissible().unwrap();
            }
        }
    }
}
