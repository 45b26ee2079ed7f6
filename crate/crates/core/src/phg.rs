//! Polyhomogeneous series `Σ c·s^σ·e^{−τs}`, the right inverses `G_∞` and
//! `G₀` of `∂² + 𝓗∂ − λ`, and the correction recursion for radial model
//! problems `𝓘φ + q(φ) = f`, together with an ODE oracle for its output.
//!
//! Sign convention: `G` is a right inverse of `L = ∂² + 𝓗∂ − λ`, and the
//! indicial operator is `𝓘 = −L`. A correction `ψ = G([F]_w)` therefore
//! satisfies `𝓘ψ = −[F]_w` and cancels the weight-`w` residual.

use crate::indicial::{critical_pair, ladder, monoid_enumerate, ExactWeight, IndicialError, Rational};
use nalgebra::DVector;
use ode_solvers::{Dop853, OutputType, System};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

pub const DEFAULT_S0: f64 = 10.0;
/// Relative size below which a cancelled coefficient counts as zero.
pub const CANCELLATION_TOLERANCE: f64 = 1e-12;
pub const QUADRATURE_TRUNCATION: f64 = 1e-10;
/// Stencil step for the residual of quadrature output.
pub const QUADRATURE_STEP: f64 = 0.01;
pub const QUADRATURE_RESIDUAL_TOLERANCE: f64 = 1e-6;
/// Dense output spacing of the ODE oracle.
pub const ODE_STEP: f64 = 1e-3;
pub const COLLOCATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhgError {
    #[error(transparent)]
    Indicial(#[from] IndicialError),
    #[error("mode {mode}: weight {tau} <= alpha+ = {alpha_plus} is outside the domain of G_inf; use G_0")]
    ResonanceDomain {
        mode: usize,
        tau: String,
        alpha_plus: String,
    },
    #[error("mode {mode}: weight {tau} outside ]{alpha_minus}, {alpha_plus}], the domain of G_0")]
    OutOfRange {
        mode: usize,
        tau: String,
        alpha_minus: String,
        alpha_plus: String,
    },
    #[error("mode index {mode} out of range ({modes} modes)")]
    Mode { mode: usize, modes: usize },
    #[error("invalid operator: {0}")]
    Operator(String),
    #[error("invalid model problem: {0}")]
    Problem(String),
    #[error("ladder exhausted: {0}")]
    LadderExhausted(String),
    #[error("resonance bookkeeping failure at weight {weight}: {reason}")]
    Resonance { weight: String, reason: String },
    #[error("weight {weight} not cancelled: leftover {defect:e} exceeds {bound:e}")]
    Cancellation { weight: String, defect: f64, bound: f64 },
    #[error("step {k}: residual floor {floor} below required {expected}")]
    Postcondition { k: usize, floor: String, expected: String },
    #[error("insufficient decay: measured tail slope {slope} but decay rate above {required} is required")]
    InsufficientDecay { slope: f64, required: f64 },
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("ODE oracle did not converge ({reason}); final residual {residual:e}")]
    Nonconvergence { residual: f64, reason: String },
}

// series

#[derive(Debug, Clone, PartialEq)]
pub struct PolyTerm {
    pub sigma: u32,
    pub tau: ExactWeight,
    pub coeff: f64,
}

impl PolyTerm {
    pub fn new(sigma: u32, tau: ExactWeight, coeff: f64) -> Self {
        Self { sigma, tau, coeff }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.jet(s)[0]
    }

    /// Value and first two derivatives in `s`.
    pub fn jet(&self, s: f64) -> [f64; 3] {
        let t = self.tau.value();
        let e = self.coeff * (-t * s).exp();
        let p = |k: i64| if k < 0 { 0.0 } else { s.powi(k as i32) };
        let sg = self.sigma as i64;
        let sf = self.sigma as f64;
        [
            e * p(sg),
            e * (sf * p(sg - 1) - t * p(sg)),
            e * (sf * (sf - 1.0) * p(sg - 2) - 2.0 * t * sf * p(sg - 1) + t * t * p(sg)),
        ]
    }
}

/// Finite sum of [`PolyTerm`]s, sorted by `(τ, σ)` with structurally distinct
/// keys and no zero coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolySeries {
    terms: Vec<PolyTerm>,
}

impl PolySeries {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(sigma: u32, tau: ExactWeight, coeff: f64) -> Self {
        Self::from_terms([PolyTerm::new(sigma, tau, coeff)])
    }

    pub fn exponential(tau: ExactWeight, coeff: f64) -> Self {
        Self::monomial(0, tau, coeff)
    }

    pub fn from_terms<I: IntoIterator<Item = PolyTerm>>(terms: I) -> Self {
        let mut map: BTreeMap<(ExactWeight, u32), f64> = BTreeMap::new();
        for t in terms {
            *map.entry((t.tau, t.sigma)).or_insert(0.0) += t.coeff;
        }
        Self {
            terms: map
                .into_iter()
                .filter(|(_, c)| *c != 0.0)
                .map(|((tau, sigma), coeff)| PolyTerm { sigma, tau, coeff })
                .collect(),
        }
    }

    pub fn terms(&self) -> &[PolyTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Smallest weight present; `None` for the zero series.
    pub fn floor(&self) -> Option<&ExactWeight> {
        self.terms.first().map(|t| &t.tau)
    }

    /// Distinct weights, ascending.
    pub fn weights(&self) -> Vec<ExactWeight> {
        let mut out: Vec<ExactWeight> = Vec::new();
        for t in &self.terms {
            if out.last() != Some(&t.tau) {
                out.push(t.tau.clone());
            }
        }
        out
    }

    /// `[u]_α`.
    pub fn component(&self, alpha: &ExactWeight) -> Self {
        Self {
            terms: self.terms.iter().filter(|t| &t.tau == alpha).cloned().collect(),
        }
    }

    pub fn without_component(&self, alpha: &ExactWeight) -> Self {
        Self {
            terms: self.terms.iter().filter(|t| &t.tau != alpha).cloned().collect(),
        }
    }

    pub fn max_sigma_at(&self, alpha: &ExactWeight) -> Option<u32> {
        self.terms.iter().filter(|t| &t.tau == alpha).map(|t| t.sigma).max()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.coeff.abs()))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|t| PolyTerm {
            coeff: t.coeff * k,
            ..t.clone()
        }))
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(s)).sum()
    }

    pub fn jet(&self, s: f64) -> [f64; 3] {
        self.terms.iter().fold([0.0; 3], |acc, t| {
            let j = t.jet(s);
            [acc[0] + j[0], acc[1] + j[1], acc[2] + j[2]]
        })
    }

    fn retain<P: Fn(&PolyTerm) -> bool>(&self, keep: P) -> Self {
        Self {
            terms: self.terms.iter().filter(|t| keep(t)).cloned().collect(),
        }
    }
}

impl Add for &PolySeries {
    type Output = PolySeries;
    fn add(self, rhs: &PolySeries) -> PolySeries {
        PolySeries::from_terms(self.terms.iter().chain(rhs.terms.iter()).cloned())
    }
}

impl Sub for &PolySeries {
    type Output = PolySeries;
    fn sub(self, rhs: &PolySeries) -> PolySeries {
        self + &(-rhs)
    }
}

impl Neg for &PolySeries {
    type Output = PolySeries;
    fn neg(self) -> PolySeries {
        self.scale(-1.0)
    }
}

impl Mul for &PolySeries {
    type Output = PolySeries;
    fn mul(self, rhs: &PolySeries) -> PolySeries {
        PolySeries::from_terms(self.terms.iter().flat_map(|a| {
            rhs.terms.iter().map(move |b| PolyTerm {
                sigma: a.sigma + b.sigma,
                tau: &a.tau + &b.tau,
                coeff: a.coeff * b.coeff,
            })
        }))
    }
}

impl fmt::Display for PolySeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{}", t.coeff)?;
            match t.sigma {
                0 => {}
                1 => f.write_str("*s")?,
                k => write!(f, "*s^{k}")?,
            }
            if !t.tau.is_zero() {
                write!(f, "*exp(-({})*s)", t.tau)?;
            }
        }
        Ok(())
    }
}

pub fn series_mul(a: &PolySeries, b: &PolySeries) -> PolySeries {
    a * b
}

pub fn extract_component(u: &PolySeries, alpha: &ExactWeight) -> PolySeries {
    u.component(alpha)
}

// radial operator

/// `−∂² − 𝓗∂ + λ_i` acting modewise, with critical pairs `α₋ < α₊`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialOperator {
    hcal: Rational,
    lambdas: Vec<Rational>,
    pairs: Vec<(ExactWeight, ExactWeight)>,
    s0: f64,
}

/// `G₀(u) = particular + endpoint`, where `endpoint` is the `e^{−α₊s}` kernel
/// term produced by the lower limit `s₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct GZeroParts {
    pub particular: PolySeries,
    pub endpoint: PolySeries,
}

fn falling(sigma: u32, j: u32) -> f64 {
    (j + 1..=sigma).fold(1.0, |p, i| p * i as f64)
}

impl RadialOperator {
    pub fn new(hcal: Rational, lambdas: Vec<Rational>) -> Result<Self, PhgError> {
        if hcal <= Rational::from_integer(0) {
            return Err(PhgError::Operator(format!("H = {hcal} must be positive")));
        }
        if lambdas.is_empty() {
            return Err(PhgError::Operator("no modes".into()));
        }
        let pairs = lambdas
            .iter()
            .map(|l| critical_pair(*l, hcal))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, (am, ap)) in pairs.iter().enumerate() {
            if am >= ap {
                return Err(PhgError::Operator(format!(
                    "mode {i}: alpha- = alpha+ = {ap}, the roots must be distinct"
                )));
            }
        }
        Ok(Self {
            hcal,
            lambdas,
            pairs,
            s0: DEFAULT_S0,
        })
    }

    pub fn scalar(hcal: Rational, lambda: Rational) -> Result<Self, PhgError> {
        Self::new(hcal, vec![lambda])
    }

    pub fn with_s0(mut self, s0: f64) -> Result<Self, PhgError> {
        if !(s0.is_finite() && s0 > 0.0) {
            return Err(PhgError::Operator(format!("s0 = {s0} must be positive")));
        }
        self.s0 = s0;
        Ok(self)
    }

    pub fn hcal(&self) -> Rational {
        self.hcal
    }

    fn hcal_f64(&self) -> f64 {
        *self.hcal.numer() as f64 / *self.hcal.denom() as f64
    }

    pub fn lambda(&self, mode: usize) -> Rational {
        self.lambdas[mode]
    }

    fn lambda_f64(&self, mode: usize) -> f64 {
        let l = self.lambdas[mode];
        *l.numer() as f64 / *l.denom() as f64
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn alpha_minus(&self, mode: usize) -> &ExactWeight {
        &self.pairs[mode].0
    }

    pub fn alpha_plus(&self, mode: usize) -> &ExactWeight {
        &self.pairs[mode].1
    }

    /// `min_i α₊^{(i)}`.
    pub fn mu_plus(&self) -> ExactWeight {
        self.pairs.iter().map(|p| &p.1).min().cloned().unwrap()
    }

    pub fn mu_plus_max(&self) -> ExactWeight {
        self.pairs.iter().map(|p| &p.1).max().cloned().unwrap()
    }

    fn gap(&self, mode: usize) -> f64 {
        (&self.pairs[mode].1 - &self.pairs[mode].0).value()
    }

    fn check_mode(&self, mode: usize) -> Result<(), PhgError> {
        if mode >= self.modes() {
            return Err(PhgError::Mode {
                mode,
                modes: self.modes(),
            });
        }
        Ok(())
    }

    /// Exact termwise action of `𝓘 = −∂² − 𝓗∂ + λ` on mode `mode`.
    pub fn apply_indicial(&self, mode: usize, u: &PolySeries) -> Result<PolySeries, PhgError> {
        self.check_mode(mode)?;
        let (am, ap) = &self.pairs[mode];
        let hcal = ExactWeight::rational(self.hcal);
        let mut out = Vec::with_capacity(3 * u.len());
        for t in u.terms() {
            // −τ² + 𝓗τ + λ = −(τ − α₋)(τ − α₊), exactly zero at a root
            let p = (&t.tau - am).value() * (&t.tau - ap).value();
            out.push(PolyTerm::new(t.sigma, t.tau.clone(), -p * t.coeff));
            if t.sigma >= 1 {
                let slope = (&(&t.tau + &t.tau) - &hcal).value();
                out.push(PolyTerm::new(
                    t.sigma - 1,
                    t.tau.clone(),
                    t.sigma as f64 * slope * t.coeff,
                ));
            }
            if t.sigma >= 2 {
                let k = (t.sigma * (t.sigma - 1)) as f64;
                out.push(PolyTerm::new(t.sigma - 2, t.tau.clone(), -k * t.coeff));
            }
        }
        Ok(PolySeries::from_terms(out))
    }

    /// `(∂² + 𝓗∂ − λ)u = −𝓘u`.
    pub fn apply_radial(&self, mode: usize, u: &PolySeries) -> Result<PolySeries, PhgError> {
        Ok(-&self.apply_indicial(mode, u)?)
    }

    /// `𝓘` evaluated pointwise from a jet `[u, u', u'']`.
    pub fn indicial_pointwise(&self, mode: usize, jet: [f64; 3]) -> f64 {
        -jet[2] - self.hcal_f64() * jet[1] + self.lambda_f64(mode) * jet[0]
    }

    /// Right inverse integrating both kernels from infinity. Requires `τ > α₊`.
    pub fn g_inf(&self, mode: usize, u: &PolySeries) -> Result<PolySeries, PhgError> {
        self.check_mode(mode)?;
        let (am, ap) = &self.pairs[mode];
        let mut out = Vec::new();
        for t in u.terms() {
            if &t.tau <= ap {
                return Err(PhgError::ResonanceDomain {
                    mode,
                    tau: t.tau.expr(),
                    alpha_plus: ap.expr(),
                });
            }
            self.polynomial_part(t, am, ap, &mut out);
        }
        Ok(PolySeries::from_terms(out))
    }

    // Σ_j σ!/j!·s^j e^{−τs}·(d₊^{−k} − d₋^{−k})/Δ with k = σ−j+1, written
    // as Σ_i d₋^i d₊^{k−1−i} / (d₊d₋)^k to avoid cancelling the difference.
    fn polynomial_part(&self, t: &PolyTerm, am: &ExactWeight, ap: &ExactWeight, out: &mut Vec<PolyTerm>) {
        let dp = (&t.tau - ap).value();
        let dm = (&t.tau - am).value();
        for j in 0..=t.sigma {
            let k = (t.sigma - j + 1) as i32;
            let sum: f64 = (0..k).map(|i| dm.powi(i) * dp.powi(k - 1 - i)).sum();
            let c = t.coeff * falling(t.sigma, j) * sum / (dp * dm).powi(k);
            out.push(PolyTerm::new(j, t.tau.clone(), c));
        }
    }

    /// Right inverse with the `α₊` kernel integrated from `s₀`. Requires
    /// `α₋ < τ ≤ α₊`; at `τ = α₊` the output gains one power of `s`.
    pub fn g_zero(&self, mode: usize, u: &PolySeries) -> Result<PolySeries, PhgError> {
        let parts = self.g_zero_parts(mode, u)?;
        Ok(&parts.particular + &parts.endpoint)
    }

    pub fn g_zero_parts(&self, mode: usize, u: &PolySeries) -> Result<GZeroParts, PhgError> {
        self.check_mode(mode)?;
        let (am, ap) = &self.pairs[mode];
        let delta = self.gap(mode);
        let s0 = self.s0;
        let mut particular = Vec::new();
        let mut endpoint = 0.0;
        for t in u.terms() {
            if &t.tau <= am || &t.tau > ap {
                return Err(PhgError::OutOfRange {
                    mode,
                    tau: t.tau.expr(),
                    alpha_minus: am.expr(),
                    alpha_plus: ap.expr(),
                });
            }
            let sigma = t.sigma;
            if &t.tau == ap {
                let dm = (&t.tau - am).value();
                for j in 0..=sigma {
                    let k = (sigma - j + 1) as i32;
                    let c = -t.coeff * falling(sigma, j) / (delta * dm.powi(k));
                    particular.push(PolyTerm::new(j, t.tau.clone(), c));
                }
                let top = sigma as f64 + 1.0;
                particular.push(PolyTerm::new(sigma + 1, t.tau.clone(), -t.coeff / (delta * top)));
                endpoint += t.coeff * s0.powi(sigma as i32 + 1) / (delta * top);
            } else {
                self.polynomial_part(t, am, ap, &mut particular);
                // F(s₀)/Δ with F(ς) = e^{βς} Σ_j (−1)^{σ−j} σ!/(j! β^{σ−j+1}) ς^j
                let beta = (ap - &t.tau).value();
                let poly: f64 = (0..=sigma)
                    .map(|j| {
                        let sign = if (sigma - j) % 2 == 0 { 1.0 } else { -1.0 };
                        sign * falling(sigma, j) / beta.powi((sigma - j + 1) as i32) * s0.powi(j as i32)
                    })
                    .sum();
                endpoint += t.coeff * (beta * s0).exp() * poly / delta;
            }
        }
        Ok(GZeroParts {
            particular: PolySeries::from_terms(particular),
            endpoint: PolySeries::exponential(ap.clone(), endpoint),
        })
    }
}

pub fn apply_indicial(op: &RadialOperator, mode: usize, u: &PolySeries) -> Result<PolySeries, PhgError> {
    op.apply_indicial(mode, u)
}

pub fn g_inf(op: &RadialOperator, mode: usize, u: &PolySeries) -> Result<PolySeries, PhgError> {
    op.g_inf(mode, u)
}

pub fn g_zero(op: &RadialOperator, mode: usize, u: &PolySeries) -> Result<PolySeries, PhgError> {
    op.g_zero(mode, u)
}

// quadrature

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenBranch {
    Infinity,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureOutput {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `max |(∂² + 𝓗∂ − λ)G(f) − f|` over interior grid points.
    pub residual: f64,
    pub tail_slope: f64,
    /// `S_max − s`, identical for every grid point.
    pub truncation_length: f64,
}

fn integrate_chunked<F: Fn(f64) -> f64>(g: F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = ((b - a).abs().ceil() as usize).max(1);
    let h = (b - a) / n as f64;
    (0..n)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let scale = [lo, 0.5 * (lo + hi), hi].iter().fold(0.0f64, |m, &x| m.max(g(x).abs()));
            if scale == 0.0 {
                return 0.0;
            }
            quadrature::double_exponential::integrate(&g, lo, hi, 1e-16 * scale * h.abs()).integral
        })
        .sum()
}

/// `G(f)` by quadrature on `grid`. The supplied `tail_rate` is the claimed
/// exponential decay of `f`, checked against the slope of `log|f|` just past
/// the grid.
pub fn g_quadrature<F>(
    op: &RadialOperator,
    mode: usize,
    branch: GreenBranch,
    f: F,
    grid: &[f64],
    tail_rate: f64,
) -> Result<QuadratureOutput, PhgError>
where
    F: Fn(f64) -> f64 + Sync,
{
    op.check_mode(mode)?;
    if grid.is_empty() || grid.iter().any(|s| !s.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PhgError::Quadrature(
            "grid must be finite and strictly increasing".into(),
        ));
    }
    let (am, ap) = (op.alpha_minus(mode).value(), op.alpha_plus(mode).value());
    let delta = op.gap(mode);
    let required = match branch {
        GreenBranch::Infinity => ap,
        GreenBranch::Zero => am,
    };
    let end = *grid.last().unwrap();
    let (f1, f2) = (f(end).abs(), f(end + 1.0).abs());
    let slope = match (f1 == 0.0, f2 == 0.0) {
        (_, true) => f64::NEG_INFINITY,
        (true, false) => f64::INFINITY,
        _ => f2.ln() - f1.ln(),
    };
    if !(-slope > required && tail_rate > required) {
        return Err(PhgError::InsufficientDecay { slope, required });
    }
    let rate = tail_rate.min(-slope);
    let length = (1.0 / QUADRATURE_TRUNCATION).ln() / (rate - required);
    if length > 1e4 {
        return Err(PhgError::InsufficientDecay { slope, required });
    }
    let s0 = op.s0();
    let g = |s: f64| -> f64 {
        match branch {
            GreenBranch::Infinity => {
                integrate_chunked(|x| ((ap * (x - s)).exp() - (am * (x - s)).exp()) * f(x), s, s + length) / delta
            }
            GreenBranch::Zero => {
                let far = integrate_chunked(|x| (am * (x - s)).exp() * f(x), s, s + length);
                let near = integrate_chunked(|x| (ap * (x - s)).exp() * f(x), s0, s);
                -(far + near) / delta
            }
        }
    };
    let values: Vec<f64> = grid.par_iter().map(|&s| g(s)).collect();
    let h = QUADRATURE_STEP;
    let (hcal, lambda) = (op.hcal_f64(), op.lambda_f64(mode));
    let residual = if grid.len() > 2 {
        (1..grid.len() - 1)
            .into_par_iter()
            .map(|i| {
                let s = grid[i];
                let st = [g(s - 2.0 * h), g(s - h), values[i], g(s + h), g(s + 2.0 * h)];
                let d1 = (st[0] - 8.0 * st[1] + 8.0 * st[3] - st[4]) / (12.0 * h);
                let d2 = (-st[0] + 16.0 * st[1] - 30.0 * st[2] + 16.0 * st[3] - st[4]) / (12.0 * h * h);
                (d2 + hcal * d1 - lambda * st[2] - f(s)).abs()
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(QuadratureOutput {
        grid: grid.to_vec(),
        values,
        residual,
        tail_slope: slope,
        truncation_length: length,
    })
}

// model problems

/// `q_output += coeff · φ_left · φ_right`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTerm {
    pub output: usize,
    pub left: usize,
    pub right: usize,
    pub coeff: f64,
}

/// `𝓘φ + q(φ) = f` with diagonal `𝓘` and quadratic `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelProblem {
    operator: RadialOperator,
    quadratic: Vec<QuadraticTerm>,
    forcing: Vec<PolySeries>,
    generators: Vec<ExactWeight>,
    kernel_data: Vec<f64>,
}

fn in_monoid(generators: &[ExactWeight], x: &ExactWeight) -> Result<bool, PhgError> {
    if x.is_zero() {
        return Ok(true);
    }
    if x < &ExactWeight::zero() {
        return Ok(false);
    }
    Ok(monoid_enumerate(generators, x.value())?.contains(x))
}

impl ModelProblem {
    /// `kernel_data[i]` is the coefficient of `e^{−α₊^{(i)} s}` injected at the
    /// rung `w = α₊^{(i)}`.
    pub fn new(
        operator: RadialOperator,
        quadratic: Vec<QuadraticTerm>,
        forcing: Vec<PolySeries>,
        generators: Vec<ExactWeight>,
        kernel_data: Vec<f64>,
    ) -> Result<Self, PhgError> {
        let m = operator.modes();
        if forcing.len() != m || kernel_data.len() != m {
            return Err(PhgError::Problem(format!(
                "{m} modes but {} forcing series and {} kernel coefficients",
                forcing.len(),
                kernel_data.len()
            )));
        }
        for q in &quadratic {
            if q.output >= m || q.left >= m || q.right >= m {
                return Err(PhgError::Problem(format!(
                    "quadratic term {q:?} references a missing mode"
                )));
            }
            if !q.coeff.is_finite() {
                return Err(PhgError::Problem("quadratic coefficient must be finite".into()));
            }
        }
        let mu = operator.mu_plus();
        if !in_monoid(&generators, &mu)? {
            return Err(PhgError::Problem(format!("mu+ = {mu} is not in the generated monoid")));
        }
        for (i, f) in forcing.iter().enumerate() {
            for w in f.weights() {
                if w <= mu {
                    return Err(PhgError::Problem(format!(
                        "mode {i}: forcing weight {w} must exceed mu+ = {mu}"
                    )));
                }
                if !in_monoid(&generators, &(&w - &mu))? {
                    return Err(PhgError::Problem(format!(
                        "mode {i}: forcing weight {w} is not on the ladder mu+ + N_L"
                    )));
                }
            }
        }
        for (i, a) in kernel_data.iter().enumerate() {
            if !a.is_finite() {
                return Err(PhgError::Problem(format!("mode {i}: kernel coefficient {a}")));
            }
            if *a != 0.0 && !in_monoid(&generators, &(operator.alpha_plus(i) - &mu))? {
                return Err(PhgError::Problem(format!(
                    "mode {i}: kernel data at alpha+ = {} is off the ladder",
                    operator.alpha_plus(i)
                )));
            }
        }
        Ok(Self {
            operator,
            quadratic,
            forcing,
            generators,
            kernel_data,
        })
    }

    /// One mode, `q(φ) = c_q φ²`, no kernel data.
    pub fn scalar(
        hcal: Rational,
        lambda: Rational,
        c_q: f64,
        forcing: PolySeries,
        generators: Vec<ExactWeight>,
    ) -> Result<Self, PhgError> {
        let quadratic = if c_q == 0.0 {
            vec![]
        } else {
            vec![QuadraticTerm {
                output: 0,
                left: 0,
                right: 0,
                coeff: c_q,
            }]
        };
        Self::new(
            RadialOperator::scalar(hcal, lambda)?,
            quadratic,
            vec![forcing],
            generators,
            vec![0.0],
        )
    }

    pub fn operator(&self) -> &RadialOperator {
        &self.operator
    }

    pub fn forcing(&self) -> &[PolySeries] {
        &self.forcing
    }

    pub fn generators(&self) -> &[ExactWeight] {
        &self.generators
    }

    pub fn kernel_data(&self) -> &[f64] {
        &self.kernel_data
    }

    pub fn quadratic(&self) -> &[QuadraticTerm] {
        &self.quadratic
    }

    pub fn nonlinearity(&self, phi: &[PolySeries]) -> Vec<PolySeries> {
        let mut out = vec![PolySeries::zero(); self.operator.modes()];
        for q in &self.quadratic {
            let prod = (&phi[q.left] * &phi[q.right]).scale(q.coeff);
            out[q.output] = &out[q.output] + &prod;
        }
        out
    }

    fn nonlinearity_pointwise(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.operator.modes()];
        for q in &self.quadratic {
            out[q.output] += q.coeff * phi[q.left] * phi[q.right];
        }
        out
    }

    /// `F(φ) = 𝓘φ + q(φ) − f`.
    pub fn residual(&self, phi: &[PolySeries]) -> Result<Vec<PolySeries>, PhgError> {
        if phi.len() != self.operator.modes() {
            return Err(PhgError::Problem(format!(
                "{} components for {} modes",
                phi.len(),
                self.operator.modes()
            )));
        }
        let q = self.nonlinearity(phi);
        (0..phi.len())
            .map(|i| Ok(&(&self.operator.apply_indicial(i, &phi[i])? + &q[i]) - &self.forcing[i]))
            .collect()
    }
}

/// Which inverse handled a mode at one rung.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenChoice {
    /// `w > α₊`.
    Infinity,
    /// `α₋ < w < α₊`; the `s₀` endpoint kernel term is dropped.
    Zero,
    /// `w = α₊`; the endpoint term is replaced by kernel data.
    ZeroResonant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCase {
    /// Previous rung at or above every `α₊`: `G_∞` on all modes.
    AboveAllCritical,
    /// Some mode still has `w ≤ α₊` and may use `G₀`.
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeStep {
    pub choice: GreenChoice,
    /// `[F(φ_{k−1})]_w`.
    pub component: PolySeries,
    pub psi: PolySeries,
    pub dropped_endpoint: PolySeries,
    pub kernel_injected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Index `k` of `ψ_k`.
    pub k: usize,
    pub weight: ExactWeight,
    pub case: StepCase,
    pub modes: Vec<ModeStep>,
    /// Largest pruned leftover at cancelled weights, relative to the cancelled scale.
    pub cancellation_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhgRun {
    pub mu_plus: ExactWeight,
    /// `a₀ .. a_{K+1}`.
    pub ladder: Vec<ExactWeight>,
    /// `μ₊ + a_k` for `k = 0 .. K+1`.
    pub rungs: Vec<ExactWeight>,
    /// `ψ₀ .. ψ_K`, one series per mode.
    pub psi: Vec<Vec<PolySeries>>,
    pub phi: Vec<PolySeries>,
    /// `F(φ_K)`.
    pub residual: Vec<PolySeries>,
    /// Floor of `F(φ_k)` over all modes for `k = 0 .. K`; `None` when `F(φ_k) = 0`.
    pub floors: Vec<Option<ExactWeight>>,
    pub steps: Vec<StepRecord>,
}

impl PhgRun {
    pub fn order(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn floor_meets_ladder(&self, k: usize) -> bool {
        match &self.floors[k] {
            None => true,
            Some(f) => f >= &self.rungs[k + 1],
        }
    }

    /// Terms `s^σ e^{−α₊s}` with `σ ≥ 1` in `φ_K`, by mode.
    pub fn resonant_log_terms(&self, op: &RadialOperator) -> Vec<(usize, PolyTerm)> {
        self.phi
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                let ap = op.alpha_plus(i).clone();
                p.terms()
                    .iter()
                    .filter(move |t| t.sigma >= 1 && t.tau == ap)
                    .map(move |t| (i, t.clone()))
            })
            .collect()
    }
}

fn joint_floor(series: &[PolySeries]) -> Option<ExactWeight> {
    series.iter().filter_map(|s| s.floor()).min().cloned()
}

/// Runs the correction recursion to order `K`.
pub fn phg_iterate(problem: &ModelProblem, order: usize) -> Result<PhgRun, PhgError> {
    iterate_signed(problem, order, 1.0)
}

fn iterate_signed(problem: &ModelProblem, order: usize, sign: f64) -> Result<PhgRun, PhgError> {
    let op = &problem.operator;
    let modes = op.modes();
    let mu = op.mu_plus();
    let mu_max = op.mu_plus_max();
    let steps_ladder = ladder(&mu, &problem.generators, order + 1).map_err(|e| match e {
        IndicialError::Unsupported(msg) => PhgError::LadderExhausted(msg),
        other => PhgError::Indicial(other),
    })?;
    let rungs: Vec<ExactWeight> = steps_ladder.iter().map(|a| &mu + a).collect();

    let psi0: Vec<PolySeries> = (0..modes)
        .map(|i| {
            if op.alpha_plus(i) == &mu && problem.kernel_data[i] != 0.0 {
                PolySeries::exponential(mu.clone(), problem.kernel_data[i])
            } else {
                PolySeries::zero()
            }
        })
        .collect();
    let mut phi = psi0.clone();
    let mut psi = vec![psi0];
    let mut residual = problem.residual(&phi)?;
    let mut floors = vec![joint_floor(&residual)];
    check_floor(0, &floors[0], &rungs[1])?;
    let mut steps = Vec::with_capacity(order);
    let mut scale = 0.0f64;

    for k in 1..=order {
        let w = &rungs[k];
        let case = if rungs[k - 1] >= mu_max {
            StepCase::AboveAllCritical
        } else {
            StepCase::Mixed
        };
        let mut mode_steps = Vec::with_capacity(modes);
        let mut psi_k = Vec::with_capacity(modes);
        for (i, res) in residual.iter().enumerate() {
            let component = res.component(w);
            scale = scale.max(component.max_abs_coeff());
            let ap = op.alpha_plus(i);
            let (choice, correction, dropped, injected) = if w > ap {
                (GreenChoice::Infinity, op.g_inf(i, &component)?, PolySeries::zero(), 0.0)
            } else {
                let parts = op.g_zero_parts(i, &component)?;
                if w == ap {
                    let a = problem.kernel_data[i];
                    let with_kernel = &parts.particular.scale(sign) + &PolySeries::exponential(ap.clone(), a);
                    (GreenChoice::ZeroResonant, with_kernel, parts.endpoint.scale(sign), a)
                } else {
                    (
                        GreenChoice::Zero,
                        parts.particular.scale(sign),
                        parts.endpoint.scale(sign),
                        0.0,
                    )
                }
            };
            let correction = if choice == GreenChoice::Infinity {
                correction.scale(sign)
            } else {
                correction
            };
            if correction.weights().iter().any(|t| t != w) {
                return Err(PhgError::Resonance {
                    weight: w.expr(),
                    reason: format!("mode {i}: correction {correction} leaves the rung"),
                });
            }
            psi_k.push(correction.clone());
            mode_steps.push(ModeStep {
                choice,
                component,
                psi: correction,
                dropped_endpoint: dropped,
                kernel_injected: injected,
            });
        }
        phi = phi.iter().zip(&psi_k).map(|(a, b)| a + b).collect();
        let raw = problem.residual(&phi)?;
        let bound = CANCELLATION_TOLERANCE * scale;
        let mut defect = 0.0f64;
        let mut offending: Option<ExactWeight> = None;
        for r in &raw {
            for t in r.terms().iter().filter(|t| &t.tau <= w) {
                if t.coeff.abs() > defect {
                    defect = t.coeff.abs();
                    offending = Some(t.tau.clone());
                }
            }
        }
        if defect > bound {
            return Err(PhgError::Cancellation {
                weight: offending.map(|o| o.expr()).unwrap_or_default(),
                defect,
                bound,
            });
        }
        residual = raw.iter().map(|r| r.retain(|t| &t.tau > w)).collect();
        let floor = joint_floor(&residual);
        check_floor(k, &floor, &rungs[k + 1])?;
        floors.push(floor);
        steps.push(StepRecord {
            k,
            weight: w.clone(),
            case,
            modes: mode_steps,
            cancellation_defect: if scale > 0.0 { defect / scale } else { 0.0 },
        });
        psi.push(psi_k);
    }
    Ok(PhgRun {
        mu_plus: mu,
        ladder: steps_ladder,
        rungs,
        psi,
        phi,
        residual,
        floors,
        steps,
    })
}

fn check_floor(k: usize, floor: &Option<ExactWeight>, expected: &ExactWeight) -> Result<(), PhgError> {
    match floor {
        Some(f) if f < expected => Err(PhgError::Postcondition {
            k,
            floor: f.expr(),
            expected: expected.expr(),
        }),
        _ => Ok(()),
    }
}

// ODE oracle

/// `φ'' = −𝓗φ' + λφ + q(base + φ) − q(base) − source(s)` in the variable
/// `t` with `s = origin + direction·t`. The state is `(D, dD/ds)` with
/// `φ = e^{−κs} D` for a fixed rate `κ`.
struct RadialSystem<'a> {
    problem: &'a ModelProblem,
    base: Vec<PolySeries>,
    source: Vec<PolySeries>,
    origin: f64,
    direction: f64,
    rate: f64,
}

impl RadialSystem<'_> {
    fn second_derivative(&self, s: f64, phi: &[f64], dphi: &[f64]) -> Vec<f64> {
        let op = &self.problem.operator;
        let m = op.modes();
        let base: Vec<f64> = self.base.iter().map(|b| b.eval(s)).collect();
        let total: Vec<f64> = (0..m).map(|i| base[i] + phi[i]).collect();
        let q1 = self.problem.nonlinearity_pointwise(&total);
        let q0 = self.problem.nonlinearity_pointwise(&base);
        (0..m)
            .map(|i| -op.hcal_f64() * dphi[i] + op.lambda_f64(i) * phi[i] + (q1[i] - q0[i]) - self.source[i].eval(s))
            .collect()
    }
}

// The independent variable travels as the last state component: the
// integrator evaluates stage times incorrectly for non-autonomous systems.
impl System<f64, DVector<f64>> for RadialSystem<'_> {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let m = self.problem.operator.modes();
        let s = self.origin + self.direction * y[2 * m];
        let k = self.rate;
        let e = (-k * s).exp();
        let (big, dbig) = (&y.as_slice()[..m], &y.as_slice()[m..2 * m]);
        let phi: Vec<f64> = big.iter().map(|d| e * d).collect();
        let dphi: Vec<f64> = (0..m).map(|i| e * (dbig[i] - k * big[i])).collect();
        let dd = self.second_derivative(s, &phi, &dphi);
        for i in 0..m {
            dy[i] = self.direction * dbig[i];
            dy[m + i] = self.direction * (dd[i] / e + 2.0 * k * dbig[i] - k * k * big[i]);
        }
        dy[2 * m] = 1.0;
    }
}

/// Dense output on `t = 0, dt, .., ≤ length`, state `(φ, dφ/ds)`.
fn integrate(
    sys: RadialSystem<'_>,
    length: f64,
    dt: f64,
    y0: DVector<f64>,
    rtol: f64,
    atol: f64,
) -> Result<(Vec<f64>, Vec<DVector<f64>>), PhgError> {
    let n = y0.len();
    let y0 = DVector::from_iterator(n + 1, y0.iter().copied().chain([0.0]));
    // Run two output steps past the range; the final dense point is unreliable.
    let end = length + 2.0 * dt;
    let mut solver = Dop853::from_param(
        sys,
        0.0,
        end,
        dt,
        y0,
        rtol,
        atol,
        0.9,
        0.0,
        0.333,
        6.0,
        end,
        0.0,
        1_000_000,
        1000,
        OutputType::Dense,
    );
    solver.integrate().map_err(|e| PhgError::Nonconvergence {
        residual: f64::NAN,
        reason: format!("integrator: {e:?}"),
    })?;
    let keep = length + 1e-9 * dt;
    Ok(solver
        .x_out()
        .iter()
        .zip(solver.y_out())
        .filter(|(t, _)| **t <= keep)
        .map(|(t, y)| (*t, y.rows(0, n).into_owned()))
        .unzip())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeBoundary {
    pub s_left: f64,
    pub s_right: f64,
    /// `φ_i(s_left)`.
    pub left_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub grid: Vec<f64>,
    /// `values[i][j] = φ_i(grid[j])`.
    pub values: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    /// `max |φ_i' + α₊^{(i)} φ_i|` at `s_right`.
    pub boundary_defect: f64,
    /// Largest local ODE residual on the interior grid.
    pub collocation_residual: f64,
    pub newton_iterations: usize,
}

/// Shooting solution of `−φ'' − 𝓗φ' + λφ + q(φ) = f` with values at
/// `s_left` and the decay condition `φ' + α₊φ = 0` at `s_right`.
pub fn ode_reference_solve(problem: &ModelProblem, boundary: &OdeBoundary) -> Result<OdeSolution, PhgError> {
    let op = &problem.operator;
    let m = op.modes();
    if boundary.left_values.len() != m {
        return Err(PhgError::Problem(format!(
            "{} boundary values for {m} modes",
            boundary.left_values.len()
        )));
    }
    let length = boundary.s_right - boundary.s_left;
    if !(length.is_finite() && length > 0.0) {
        return Err(PhgError::Problem("s_right must exceed s_left".into()));
    }
    let ap: Vec<f64> = (0..m).map(|i| op.alpha_plus(i).value()).collect();
    let system = || RadialSystem {
        problem,
        base: vec![PolySeries::zero(); m],
        source: problem.forcing.clone(),
        origin: boundary.s_left,
        direction: 1.0,
        rate: 0.0,
    };
    let (rtol, atol) = (1e-12, 1e-14);
    let start =
        |p: &[f64]| DVector::from_iterator(2 * m, boundary.left_values.iter().copied().chain(p.iter().copied()));
    let shoot = |p: &[f64]| -> Result<Vec<f64>, PhgError> {
        let (_, ys) = integrate(system(), length, length, start(p), rtol, atol)?;
        let y = ys.last().unwrap();
        Ok((0..m).map(|i| y[m + i] + ap[i] * y[i]).collect())
    };
    let mut p: Vec<f64> = (0..m).map(|i| -ap[i] * boundary.left_values[i]).collect();
    let mut r = shoot(&p)?;
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let scale = 1.0 + norm(&boundary.left_values);
    let mut iterations = 0;
    while norm(&r) > 1e-12 * scale {
        if iterations == 40 {
            return Err(PhgError::Nonconvergence {
                residual: norm(&r),
                reason: "shooting did not meet the decay condition".into(),
            });
        }
        iterations += 1;
        let mut jac = nalgebra::DMatrix::zeros(m, m);
        for j in 0..m {
            let h = 1e-6 * p[j].abs().max(1.0);
            let mut pj = p.clone();
            pj[j] += h;
            let rj = shoot(&pj)?;
            for i in 0..m {
                jac[(i, j)] = (rj[i] - r[i]) / h;
            }
        }
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or_else(|| PhgError::Nonconvergence {
                residual: norm(&r),
                reason: "singular shooting Jacobian".into(),
            })?;
        for j in 0..m {
            p[j] -= step[j];
        }
        r = shoot(&p)?;
    }
    let (ts, ys) = integrate(system(), length, ODE_STEP, start(&p), rtol, atol)?;
    let grid: Vec<f64> = ts.iter().map(|t| boundary.s_left + t).collect();
    let values: Vec<Vec<f64>> = (0..m).map(|i| ys.iter().map(|y| y[i]).collect()).collect();
    let derivatives: Vec<Vec<f64>> = (0..m).map(|i| ys.iter().map(|y| y[m + i]).collect()).collect();
    let sys = system();
    let mut collocation = 0.0f64;
    for j in 2..grid.len().saturating_sub(2) {
        let h = (grid[j + 1] - grid[j - 1]) / 2.0;
        let phi: Vec<f64> = (0..m).map(|i| values[i][j]).collect();
        let dphi: Vec<f64> = (0..m).map(|i| derivatives[i][j]).collect();
        let rhs = sys.second_derivative(grid[j], &phi, &dphi);
        for i in 0..m {
            let d = &derivatives[i];
            let fd = (d[j - 2] - 8.0 * d[j - 1] + 8.0 * d[j + 1] - d[j + 2]) / (12.0 * h);
            collocation = collocation.max((fd - rhs[i]).abs());
        }
    }
    if collocation > COLLOCATION_TOLERANCE {
        return Err(PhgError::Nonconvergence {
            residual: collocation,
            reason: "collocation residual above tolerance".into(),
        });
    }
    Ok(OdeSolution {
        grid,
        values,
        derivatives,
        boundary_defect: norm(&r),
        collocation_residual: collocation,
        newton_iterations: iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    /// Least-squares slope of `log max_i |φ_i − φ_{K,i}|` on the window.
    pub slope: f64,
    /// `μ₊ + a_{K+1}`.
    pub expected_rate: f64,
    pub window: (f64, f64),
    pub terminal: f64,
    pub samples: Vec<(f64, f64)>,
    /// `max |F(φ_K)(s) − (𝓘φ_K + q(φ_K) − f)(s)|` on `[0, 3]`, relative to the
    /// size of the pointwise terms.
    pub forcing_defect: f64,
}

impl SlopeReport {
    pub fn relative_error(&self) -> f64 {
        (self.slope + self.expected_rate).abs() / self.expected_rate
    }

    pub fn within(&self, fraction: f64) -> bool {
        self.relative_error() <= fraction
    }

    /// `slope ≤ −rate + fraction·rate`.
    pub fn at_most(&self, fraction: f64) -> bool {
        self.slope <= -self.expected_rate + fraction * self.expected_rate
    }
}

pub const SLOPE_TERMINAL: f64 = 40.0;
pub const SLOPE_WINDOW: (f64, f64) = (5.0, 15.0);

/// Integrates the equation for `d = φ − φ_K`,
/// `−d'' − 𝓗d' + λd + q(φ_K + d) − q(φ_K) = −F(φ_K)`, backward from
/// `s = 40` with zero data, and fits the decay rate of `d` on `[5, 15]`.
pub fn remainder_slope_check(problem: &ModelProblem, run: &PhgRun) -> Result<SlopeReport, PhgError> {
    let op = &problem.operator;
    let m = op.modes();
    let k = run.order();
    let residual = &run.residual;

    let mut forcing_defect = 0.0f64;
    for j in 0..=30 {
        let s = j as f64 * 0.1;
        let phi: Vec<f64> = run.phi.iter().map(|p| p.eval(s)).collect();
        let q = problem.nonlinearity_pointwise(&phi);
        for i in 0..m {
            let jet = run.phi[i].jet(s);
            let lin = op.indicial_pointwise(i, jet);
            let f = problem.forcing[i].eval(s);
            let size = jet
                .iter()
                .fold(1.0f64, |a, x| a.max(x.abs()))
                .max(q[i].abs())
                .max(f.abs());
            let defect = (residual[i].eval(s) - (lin + q[i] - f)).abs() / size;
            forcing_defect = forcing_defect.max(defect);
        }
    }

    // Rescaling by the forcing floor keeps the state O(1) down to e^{-κ·40}.
    let rate = joint_floor(residual).map(|f| f.value()).unwrap_or(0.0);
    let sys = RadialSystem {
        problem,
        base: run.phi.clone(),
        source: residual.iter().map(|r| -r).collect(),
        origin: SLOPE_TERMINAL,
        direction: -1.0,
        rate,
    };
    let length = SLOPE_TERMINAL - SLOPE_WINDOW.0;
    let (ts, ys) = integrate(sys, length, 0.1, DVector::zeros(2 * m), 1e-12, 1e-16)?;
    let samples: Vec<(f64, f64)> = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| {
            let s = SLOPE_TERMINAL - t;
            (s, (-rate * s).exp() * (0..m).fold(0.0f64, |a, i| a.max(y[i].abs())))
        })
        .filter(|(s, _)| *s >= SLOPE_WINDOW.0 - 1e-9 && *s <= SLOPE_WINDOW.1 + 1e-9)
        .collect();
    if samples.len() < 3 || samples.iter().any(|(_, d)| *d <= 0.0 || !d.is_finite()) {
        return Err(PhgError::Nonconvergence {
            residual: f64::NAN,
            reason: "remainder vanishes or is not finite on the fit window".into(),
        });
    }
    let n = samples.len() as f64;
    let (sx, sy) = samples.iter().fold((0.0, 0.0), |(a, b), (s, d)| (a + s, b + d.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = samples.iter().fold((0.0, 0.0), |(a, b), (s, d)| {
        (a + (s - mx) * (d.ln() - my), b + (s - mx) * (s - mx))
    });
    Ok(SlopeReport {
        slope: num / den,
        expected_rate: run.rungs[k + 1].value(),
        window: SLOPE_WINDOW,
        terminal: SLOPE_TERMINAL,
        samples,
        forcing_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn w(s: &str) -> ExactWeight {
        s.parse().unwrap()
    }

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p, d)
    }

    fn e(tau: &str, c: f64) -> PolySeries {
        PolySeries::exponential(w(tau), c)
    }

    fn model() -> ModelProblem {
        ModelProblem::scalar(q(3, 1), q(0, 1), 1.0, e("4", 1.0), vec![w("1"), w("3")]).unwrap()
    }

    #[test]
    fn multiplication_merges_terms() {
        let a = e("1", 1.0);
        let b = PolySeries::monomial(1, w("2"), 1.0);
        assert_eq!(&a * &b, PolySeries::monomial(1, w("3"), 1.0));
        let u = &e("0", 1.0) - &e("1", 1.0);
        let sq = &u * &u;
        assert_eq!(
            sq,
            PolySeries::from_terms([
                PolyTerm::new(0, w("0"), 1.0),
                PolyTerm::new(0, w("1"), -2.0),
                PolyTerm::new(0, w("2"), 1.0),
            ])
        );
        assert_eq!(sq.floor(), Some(&w("0")));
    }

    #[test]
    fn component_extraction() {
        let u = PolySeries::from_terms([
            PolyTerm::new(0, w("2"), 3.0),
            PolyTerm::new(1, w("2"), 1.0),
            PolyTerm::new(0, w("3"), 1.0),
        ]);
        assert_eq!(u.component(&w("2")).len(), 2);
        assert!(u.component(&w("5")).is_zero());
        assert!(u.without_component(&w("2")).floor().unwrap() > &w("2"));
    }

    #[test]
    fn indicial_action_examples() {
        let op = RadialOperator::scalar(q(3, 1), q(0, 1)).unwrap();
        assert!(op.apply_indicial(0, &e("3", 1.0)).unwrap().is_zero());
        assert!(op.apply_indicial(0, &e("0", 1.0)).unwrap().is_zero());
        assert_eq!(op.apply_indicial(0, &e("4", 1.0)).unwrap(), e("4", -4.0));
        assert_eq!(
            op.apply_indicial(0, &PolySeries::monomial(1, w("3"), 1.0)).unwrap(),
            e("3", 3.0)
        );
        let irr = RadialOperator::scalar(q(2, 1), q(2, 1)).unwrap();
        for mu in [irr.alpha_minus(0).clone(), irr.alpha_plus(0).clone()] {
            assert!(irr
                .apply_indicial(0, &PolySeries::exponential(mu, 1.0))
                .unwrap()
                .is_zero());
        }
    }

    #[test]
    fn g_inf_examples() {
        let op = RadialOperator::scalar(q(3, 1), q(0, 1)).unwrap();
        let g = op.g_inf(0, &e("4", 1.0)).unwrap();
        assert_abs_diff_eq!(g.terms()[0].coeff, 0.25, epsilon = 1e-15);
        assert_eq!(op.apply_radial(0, &g).unwrap(), e("4", 1.0));
        assert!(matches!(
            op.g_inf(0, &e("3", 1.0)),
            Err(PhgError::ResonanceDomain { .. })
        ));
        let u = PolySeries::monomial(2, w("9/2"), 1.0);
        assert_eq!(op.g_inf(0, &u.scale(2.0)).unwrap(), op.g_inf(0, &u).unwrap().scale(2.0));
    }

    #[test]
    fn g_zero_examples() {
        let op = RadialOperator::scalar(q(3, 1), q(0, 1)).unwrap();
        let s0 = op.s0();
        let g = op.g_zero(0, &e("3", 1.0)).unwrap();
        let expect = PolySeries::from_terms([
            PolyTerm::new(0, w("3"), -1.0 / 9.0 + s0 / 3.0),
            PolyTerm::new(1, w("3"), -1.0 / 3.0),
        ]);
        for (a, b) in g.terms().iter().zip(expect.terms()) {
            assert_eq!((a.sigma, &a.tau), (b.sigma, &b.tau));
            assert_abs_diff_eq!(a.coeff, b.coeff, epsilon = 1e-14);
        }
        let g2 = op.g_zero_parts(0, &e("2", 1.0)).unwrap();
        assert_eq!(g2.particular, e("2", -0.5));
        assert_abs_diff_eq!(g2.endpoint.terms()[0].coeff, s0.exp() / 3.0, epsilon = 1e-9);
        assert_eq!(g2.endpoint.floor(), Some(&w("3")));
        assert!(matches!(op.g_zero(0, &e("0", 1.0)), Err(PhgError::OutOfRange { .. })));
        assert!(matches!(op.g_zero(0, &e("4", 1.0)), Err(PhgError::OutOfRange { .. })));
    }

    #[test]
    fn right_inverse_with_powers() {
        let op = RadialOperator::new(q(5, 2), vec![q(0, 1), q(3, 1), q(-1, 1)]).unwrap();
        for mode in 0..3 {
            let ap = op.alpha_plus(mode).clone();
            let am = op.alpha_minus(mode).clone();
            let mid = (&ap + &am).scale(q(1, 2));
            for sigma in 0..=3 {
                for (tau, inf) in [(&ap + &w("1/3"), true), (mid.clone(), false), (ap.clone(), false)] {
                    let u = PolySeries::monomial(sigma, tau.clone(), 1.5);
                    let g = if inf { op.g_inf(mode, &u) } else { op.g_zero(mode, &u) }.unwrap();
                    let back = op.apply_radial(mode, &g).unwrap();
                    let err = (&back - &u).max_abs_coeff();
                    assert!(err <= 1e-12 * 1.5, "mode {mode} sigma {sigma} tau {tau}: {err}");
                    let top = g.max_sigma_at(&tau).unwrap();
                    assert_eq!(top, if tau == ap { sigma + 1 } else { sigma });
                }
            }
        }
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let op = RadialOperator::scalar(q(3, 1), q(0, 1)).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
        let out = g_quadrature(&op, 0, GreenBranch::Infinity, |s| (-4.0 * s).exp(), &grid, 4.0).unwrap();
        for (s, v) in grid.iter().zip(&out.values) {
            assert_abs_diff_eq!(*v, (-4.0 * s).exp() / 4.0, epsilon = 1e-8);
        }
        assert!(out.residual < QUADRATURE_RESIDUAL_TOLERANCE);
        let two = g_quadrature(
            &op,
            0,
            GreenBranch::Infinity,
            |s| (-4.0 * s).exp() + (-5.0 * s).exp(),
            &grid,
            4.0,
        )
        .unwrap();
        assert!(two.residual < QUADRATURE_RESIDUAL_TOLERANCE, "{}", two.residual);
        let zero = g_quadrature(&op, 0, GreenBranch::Infinity, |_| 0.0, &grid, 4.0).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        let slow = g_quadrature(&op, 0, GreenBranch::Infinity, |s| (-2.0 * s).exp(), &grid, 4.0);
        assert!(matches!(slow, Err(PhgError::InsufficientDecay { .. })));
    }

    #[test]
    fn quadrature_zero_branch() {
        let op = RadialOperator::scalar(q(3, 1), q(0, 1)).unwrap().with_s0(3.0).unwrap();
        let grid: Vec<f64> = (0..=8).map(|i| i as f64 * 0.5).collect();
        let out = g_quadrature(&op, 0, GreenBranch::Zero, |s| (-2.0 * s).exp(), &grid, 2.0).unwrap();
        let closed = op.g_zero(0, &e("2", 1.0)).unwrap();
        for (s, v) in grid.iter().zip(&out.values) {
            assert_abs_diff_eq!(*v, closed.eval(*s), epsilon = 1e-8);
        }
        assert!(out.residual < QUADRATURE_RESIDUAL_TOLERANCE, "{}", out.residual);
    }

    #[test]
    fn model_problem_first_correction() {
        let run = phg_iterate(&model(), 4).unwrap();
        assert_eq!(run.psi[1][0], e("4", -0.25));
        assert_eq!(run.residual[0], e("8", 1.0 / 16.0));
        let floors: Vec<ExactWeight> = run.floors.iter().map(|f| f.clone().unwrap()).collect();
        assert_eq!(floors, vec![w("4"), w("8"), w("8"), w("8"), w("8")]);
        assert_eq!(run.rungs[5], w("8"));
        assert!((0..=4).all(|k| run.floor_meets_ladder(k)));
        assert!(run.psi[2..].iter().all(|p| p[0].is_zero()));
    }

    #[test]
    fn opposite_sign_fails_to_cancel() {
        match iterate_signed(&model(), 4, -1.0) {
            Err(PhgError::Cancellation { weight, .. }) => assert_eq!(weight, "4"),
            other => panic!("expected a cancellation failure, got {other:?}"),
        }
    }

    #[test]
    fn zero_forcing_is_trivial() {
        let p = ModelProblem::scalar(q(3, 1), q(0, 1), 1.0, PolySeries::zero(), vec![w("1"), w("3")]).unwrap();
        let run = phg_iterate(&p, 4).unwrap();
        assert!(run.psi.iter().all(|v| v[0].is_zero()));
        assert!(run.phi[0].is_zero());
        assert!(run.floors.iter().all(Option::is_none));
    }

    #[test]
    fn resonant_rung_produces_log_term() {
        let op = RadialOperator::new(q(3, 1), vec![q(0, 1), q(4, 1)]).unwrap();
        let quad = vec![QuadraticTerm {
            output: 1,
            left: 1,
            right: 1,
            coeff: 1.0,
        }];
        let p = ModelProblem::new(
            op.clone(),
            quad,
            vec![PolySeries::zero(), e("4", 1.0)],
            vec![w("1"), w("3"), w("4")],
            vec![0.0, 0.5],
        )
        .unwrap();
        let run = phg_iterate(&p, 4).unwrap();
        assert_eq!(run.steps[0].modes[1].choice, GreenChoice::ZeroResonant);
        assert_eq!(run.steps[0].modes[1].kernel_injected, 0.5);
        let logs = run.resonant_log_terms(&op);
        assert_eq!(logs.len(), 1);
        assert_eq!((logs[0].0, logs[0].1.sigma, &logs[0].1.tau), (1, 1, &w("4")));
        assert_abs_diff_eq!(logs[0].1.coeff, 0.2, epsilon = 1e-15);
        assert!((0..=4).all(|k| run.floor_meets_ladder(k)));
    }

    #[test]
    fn problem_validation() {
        let bad = ModelProblem::scalar(q(3, 1), q(0, 1), 1.0, e("3", 1.0), vec![w("1")]);
        assert!(matches!(bad, Err(PhgError::Problem(_))));
        let off = ModelProblem::scalar(q(3, 1), q(0, 1), 1.0, e("7/2", 1.0), vec![w("1")]);
        assert!(matches!(off, Err(PhgError::Problem(_))));
        assert!(RadialOperator::scalar(q(2, 1), q(-1, 1)).is_err());
        assert!(RadialOperator::scalar(q(2, 1), q(-2, 1)).is_err());
    }

    #[test]
    fn ode_linear_example() {
        let p = ModelProblem::scalar(q(3, 1), q(0, 1), 0.0, e("4", 1.0), vec![w("1"), w("3")]).unwrap();
        let b = OdeBoundary {
            s_left: 0.0,
            s_right: 10.0,
            left_values: vec![0.0],
        };
        let sol = ode_reference_solve(&p, &b).unwrap();
        let c = -(-40.0f64).exp() / 12.0;
        let bb = 0.25 - c;
        for (j, s) in sol.grid.iter().enumerate().step_by(250) {
            let exact = -(-4.0 * s).exp() / 4.0 + bb * (-3.0 * s).exp() + c;
            assert_abs_diff_eq!(sol.values[0][j], exact, epsilon = 1e-6);
        }
        assert!(sol.collocation_residual < COLLOCATION_TOLERANCE);
        let z = ModelProblem::scalar(q(3, 1), q(0, 1), 1.0, PolySeries::zero(), vec![w("1"), w("3")]).unwrap();
        let sol = ode_reference_solve(&z, &b).unwrap();
        assert!(sol.values[0].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn remainder_decays_at_next_rung() {
        let p = model();
        let run = phg_iterate(&p, 4).unwrap();
        let rep = remainder_slope_check(&p, &run).unwrap();
        assert!(rep.within(0.05), "slope {}", rep.slope);
        assert!(rep.at_most(0.05));
        assert!(rep.forcing_defect < 1e-12, "{}", rep.forcing_defect);
    }
}
