//! The six subcommands. Each returns a [`Report`]; library errors surface as
//! failing checks rather than aborting the run.

use std::time::Instant;

use hyperphg::indicial::{
    dirichlet_interval, einstein_complex_spectrum, indicial_symbol, ladder, monoid_enumerate, ExactWeight, Mode,
    ModeSpectrum, Rational,
};
use hyperphg::models::{
    complex_structure_j, sample_model_coords, Bisector, BisectorToSiegel, Chart, FermiToUpperHalf, MetricModel,
    RealFermi, SamplingBox, Siegel, UpperHalfReal,
};
use hyperphg::phg::{
    phg_iterate, remainder_slope_check, GreenChoice, ModelProblem, PhgRun, PolySeries, PolyTerm, QuadraticTerm,
    RadialOperator, StepCase,
};
use hyperphg::tensor::{
    bisector_block_closed, bisector_block_printed, bisector_frame_block, bisector_mean_curvature_closed,
    bisector_mean_curvature_printed, curvature, pullback_check, second_fundamental_form, DerivativeRoute,
    JacobianRoute, PullbackReport, ScalarField,
};
use hyperphg::weights::{
    certify_positivity, identity_residual, large_s_limit, line_terms, shifted_interval, weight_functional_closed,
    weight_functional_numeric, weight_functional_printed, LineCoordinates, WeightKind, WeightSpec,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{CommandName, ModelKind, PhgConfig, RunConfig, SpectrumSource};
use crate::report::{round_sig, Check, Report, Table};

pub fn run(command: CommandName, cfg: &RunConfig) -> Report {
    let start = Instant::now();
    let mut report = Report::new(command.as_str(), cfg.seed, cfg.echo(command));
    match command {
        CommandName::VerifyMetric => verify_metric(cfg, &mut report),
        CommandName::CurvatureReport => curvature_report(cfg, &mut report),
        CommandName::WeightScan => weight_scan(cfg, &mut report),
        CommandName::Indicial => indicial(cfg, &mut report),
        CommandName::Monoid => monoid(cfg, &mut report),
        CommandName::PhgRun => phg_run(cfg, &mut report),
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    report
}

/// Independent stream `k` of the run seed.
fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn weight_json(w: &ExactWeight) -> Value {
    json!({ "expr": w.expr(), "value": w.value() })
}

fn series_json(s: &PolySeries) -> Value {
    Value::Array(
        s.terms()
            .iter()
            .map(
                |t| json!({ "sigma": t.sigma, "tau_expr": t.tau.expr(), "tau_value": t.tau.value(), "coeff": t.coeff }),
            )
            .collect(),
    )
}

fn pullback_json(r: &PullbackReport) -> Value {
    json!({
        "max_deviation": r.max_deviation,
        "max_scaled_deviation": r.max_scaled_deviation,
        "argmax": r.argmax,
        "evaluated": r.evaluated,
        "skipped": r.skipped.iter().map(|(i, why)| json!({ "index": i, "reason": why })).collect::<Vec<_>>(),
    })
}

fn route_name(r: JacobianRoute) -> &'static str {
    match r {
        JacobianRoute::Analytic => "analytic",
        JacobianRoute::FiniteDifference => "finite-difference",
    }
}

// ---------------------------------------------------------------------------
// geometry

fn pullback_suite<C, S, T>(
    report: &mut Report,
    label: &str,
    (map, source, target): (&C, &S, &T),
    points: &[Vec<f64>],
    tol: f64,
) where
    C: hyperphg::models::ChartMap,
    S: MetricModel,
    T: MetricModel,
{
    let routes = [JacobianRoute::Analytic, JacobianRoute::FiniteDifference];
    let results: Vec<PullbackReport> = routes
        .par_iter()
        .map(|&r| pullback_check(map, source, target, points, r))
        .collect();
    let mut data = serde_json::Map::new();
    for (route, r) in routes.iter().zip(&results) {
        let name = route_name(*route);
        report.check(Check::at_most(
            format!("pullback {label} ({name} jacobian)"),
            r.max_deviation,
            tol,
        ));
        report.check(Check::raw(
            format!("pullback {label} ({name} jacobian) points evaluated"),
            points.len().into(),
            r.evaluated.into(),
            Value::Null,
            r.evaluated == points.len(),
        ));
        data.insert(name.into(), pullback_json(r));
    }
    report.data(&format!("pullback {label}"), Value::Object(data));
}

struct Plane {
    point: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

fn sample_planes(chart: Chart, bx: &SamplingBox, count: usize, rng: &mut ChaCha8Rng) -> Vec<Plane> {
    let d = chart.manifold_dim();
    (0..count)
        .map(|_| Plane {
            point: bx.sample(chart, rng),
            u: random_vec(rng, d),
            v: random_vec(rng, d),
        })
        .collect()
}

/// Sectional curvatures of random planes; degenerate planes are counted, not used.
fn plane_curvatures<M: MetricModel>(model: &M, planes: &[Plane]) -> (Vec<f64>, usize, Vec<String>) {
    let results: Vec<Result<Option<f64>, String>> = planes
        .par_iter()
        .map(|p| {
            let c = curvature(model, &p.point, DerivativeRoute::HyperDual).map_err(|e| e.to_string())?;
            Ok(c.sectional(&p.u, &p.v).ok())
        })
        .collect();
    let mut ks = Vec::new();
    let mut degenerate = 0;
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(Some(k)) => ks.push(k),
            Ok(None) => degenerate += 1,
            Err(e) => errors.push(e),
        }
    }
    (ks, degenerate, errors)
}

fn range_of(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
        (lo.min(k), hi.max(k))
    })
}

fn curvature_range(report: &mut Report, ks: &[f64], degenerate: usize, errors: &[String], kind: ModelKind, tol: f64) {
    let (lo, hi) = range_of(ks);
    report.data(
        "sectional_curvature",
        json!({ "planes": ks.len(), "degenerate": degenerate, "min": round_sig(lo), "max": round_sig(hi),
            "errors": errors }),
    );
    report.check(Check::holds(
        "curvature evaluated at every sampled point",
        errors.is_empty(),
        errors.len(),
    ));
    match kind {
        ModelKind::Complex(_) => {
            report.check(Check::raw(
                "sectional curvature >= -1",
                (-1.0).into(),
                round_sig(lo),
                tol.into(),
                lo >= -1.0 - tol,
            ));
            report.check(Check::raw(
                "sectional curvature <= -1/4",
                (-0.25).into(),
                round_sig(hi),
                tol.into(),
                hi <= -0.25 + tol,
            ));
        }
        ModelKind::Real(_) => {
            let dev = ks.iter().fold(0.0f64, |m, k| m.max((k + 1.0).abs()));
            report.check(Check::raw(
                "sectional curvature identically -1",
                (-1.0).into(),
                round_sig(dev),
                tol.into(),
                dev <= tol && !ks.is_empty(),
            ));
        }
    }
}

fn geometry_box(cfg: &RunConfig) -> SamplingBox {
    SamplingBox::default().with_rho_max(cfg.model.rho_max)
}

fn verify_metric(cfg: &RunConfig, report: &mut Report) {
    let tol = &cfg.tolerances;
    let bx = geometry_box(cfg);
    report.data("sampling_box", bx.describe());
    let mut rng = stream(cfg.seed, 0);
    match cfg.model.kind {
        ModelKind::Complex(m) => {
            let chart = Chart::Bisector(m);
            let pts: Vec<Vec<f64>> = (0..cfg.model.points).map(|_| bx.sample(chart, &mut rng)).collect();
            pullback_suite(
                report,
                "bisector -> Siegel",
                (&BisectorToSiegel { m }, &Bisector { m }, &Siegel { m }),
                &pts,
                tol.pullback,
            );
            // out to the default rho range only the scaled deviation is meaningful
            let wide: Vec<Vec<f64>> = (0..cfg.model.points)
                .map(|_| SamplingBox::default().sample(chart, &mut rng))
                .collect();
            let r = pullback_check(
                &BisectorToSiegel { m },
                &Bisector { m },
                &Siegel { m },
                &wide,
                JacobianRoute::Analytic,
            );
            report.data("pullback wide box (diagnostic)", pullback_json(&r));
            let planes = sample_planes(chart, &bx, cfg.model.planes, &mut rng);
            let (ks, deg, errs) = plane_curvatures(&Bisector { m }, &planes);
            curvature_range(report, &ks, deg, &errs, cfg.model.kind, tol.curvature);
        }
        ModelKind::Real(n) => {
            let chart = Chart::RealFermi(n);
            let pts: Vec<Vec<f64>> = (0..cfg.model.points).map(|_| bx.sample(chart, &mut rng)).collect();
            pullback_suite(
                report,
                "Fermi -> upper half-space",
                (&FermiToUpperHalf { n }, &RealFermi { n }, &UpperHalfReal { n }),
                &pts,
                tol.pullback,
            );
            let planes = sample_planes(chart, &bx, cfg.model.planes, &mut rng);
            let (ks, deg, errs) = plane_curvatures(&RealFermi { n }, &planes);
            curvature_range(report, &ks, deg, &errs, cfg.model.kind, tol.curvature);
        }
    }
}

fn matvec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

fn inner(g: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(matvec(g, y)).map(|(a, b)| a * b).sum()
}

/// Per-point curvature data of the complex model.
struct ComplexPlaneData {
    holomorphic: f64,
    totally_real: f64,
    einstein: f64,
    einstein_defect: f64,
    symmetry: f64,
    bianchi: f64,
}

fn complex_extremes(m: usize, planes: &[Plane]) -> Vec<Result<ComplexPlaneData, String>> {
    planes
        .par_iter()
        .map(|p| {
            let model = Bisector { m };
            let c = curvature(&model, &p.point, DerivativeRoute::HyperDual).map_err(|e| e.to_string())?;
            let j = complex_structure_j(m, &p.point).map_err(|e| e.to_string())?;
            let g = &c.metric;
            let x = &p.u;
            let jx = matvec(&j, x);
            let xx = inner(g, x, x);
            let jj = inner(g, &jx, &jx);
            let y: Vec<f64> = (0..x.len())
                .map(|i| p.v[i] - inner(g, &p.v, x) / xx * x[i] - inner(g, &p.v, &jx) / jj * jx[i])
                .collect();
            let (e, defect) = c.einstein_constant();
            Ok(ComplexPlaneData {
                holomorphic: c.sectional(x, &jx).map_err(|e| e.to_string())?,
                totally_real: c.sectional(x, &y).map_err(|e| e.to_string())?,
                einstein: e,
                einstein_defect: defect,
                symmetry: c.symmetry_defect(),
                bianchi: c.bianchi_defect(),
            })
        })
        .collect()
}

fn curvature_report(cfg: &RunConfig, report: &mut Report) {
    let tol = &cfg.tolerances;
    let bx = geometry_box(cfg);
    report.data("sampling_box", bx.describe());
    let mut rng = stream(cfg.seed, 1);
    match cfg.model.kind {
        ModelKind::Complex(m) => {
            let chart = Chart::Bisector(m);
            let planes = sample_planes(chart, &bx, cfg.model.planes, &mut rng);
            let special = sample_planes(chart, &bx, cfg.model.planes.min(50), &mut rng);
            let fol_pts: Vec<Vec<f64>> = (0..cfg.model.foliation_points)
                .map(|_| SamplingBox::default().sample(chart, &mut rng))
                .collect();
            let ((ks, deg, errs), (extremes, foliation)) = rayon::join(
                || plane_curvatures(&Bisector { m }, &planes),
                || rayon::join(|| complex_extremes(m, &special), || bisector_foliation(m, &fol_pts)),
            );
            curvature_range(report, &ks, deg, &errs, cfg.model.kind, tol.curvature);
            let ok: Vec<&ComplexPlaneData> = extremes.iter().filter_map(|r| r.as_ref().ok()).collect();
            let errors: Vec<&String> = extremes.iter().filter_map(|r| r.as_ref().err()).collect();
            report.check(Check::holds(
                "extreme planes evaluated",
                errors.is_empty(),
                errors.len(),
            ));
            let worst = |f: &dyn Fn(&ComplexPlaneData) -> f64| ok.iter().fold(0.0f64, |a, d| a.max(f(d)));
            let einstein = -(m as f64 + 1.0) / 2.0;
            report.check(Check::at_most(
                "holomorphic planes (X, JX): max |K + 1|",
                worst(&|d| (d.holomorphic + 1.0).abs()),
                tol.curvature,
            ));
            report.check(Check::at_most(
                "totally real planes: max |K + 1/4|",
                worst(&|d| (d.totally_real + 0.25).abs()),
                tol.curvature,
            ));
            report.check(Check::at_most(
                "Einstein constant: max |c + (m+1)/2|",
                worst(&|d| (d.einstein - einstein).abs()),
                tol.curvature,
            ));
            report.check(Check::at_most(
                "Ricci - c g in orthonormal frame",
                worst(&|d| d.einstein_defect),
                tol.curvature,
            ));
            report.check(Check::at_most(
                "Riemann symmetry defect",
                worst(&|d| d.symmetry),
                tol.curvature,
            ));
            report.check(Check::at_most(
                "first Bianchi defect",
                worst(&|d| d.bianchi),
                tol.curvature,
            ));
            report.data("einstein_constant_expected", einstein);
            foliation_checks(report, m, &fol_pts, foliation, cfg);
        }
        ModelKind::Real(n) => {
            let chart = Chart::RealFermi(n);
            let planes = sample_planes(chart, &bx, cfg.model.planes, &mut rng);
            let (ks, deg, errs) = plane_curvatures(&RealFermi { n }, &planes);
            curvature_range(report, &ks, deg, &errs, cfg.model.kind, tol.curvature);
            let fol_pts: Vec<Vec<f64>> = (0..cfg.model.foliation_points)
                .map(|_| bx.sample(chart, &mut rng))
                .collect();
            real_foliation(report, n, &fol_pts, cfg);
        }
    }
}

struct FoliationSample {
    eigen_defect: f64,
    block: [[f64; 2]; 2],
    mean: f64,
    splitting: f64,
}

fn bisector_foliation(m: usize, pts: &[Vec<f64>]) -> Vec<Result<FoliationSample, String>> {
    pts.par_iter()
        .map(|x| {
            let fol =
                second_fundamental_form(&Bisector { m }, x, DerivativeRoute::HyperDual).map_err(|e| e.to_string())?;
            // slice coordinates drop s, so ∂ρ is slice vector 1
            let mut drho = vec![0.0; fol.slice_indices.len()];
            drho[1] = 1.0;
            Ok(FoliationSample {
                eigen_defect: fol.eigen_defect(&drho, -0.5 * (x[0] / 2.0).tanh()),
                block: bisector_frame_block(m, x, &fol),
                mean: fol.mean_curvature,
                splitting: fol.splitting_defect,
            })
        })
        .collect()
}

fn block_dev(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    (0..4).fold(0.0f64, |acc, k| acc.max((a[k / 2][k % 2] - b[k / 2][k % 2]).abs()))
}

fn foliation_checks(
    report: &mut Report,
    m: usize,
    pts: &[Vec<f64>],
    samples: Vec<Result<FoliationSample, String>>,
    cfg: &RunConfig,
) {
    let tol = &cfg.tolerances;
    let mut errors = Vec::new();
    let (mut eig, mut block, mut printed_block, mut mean, mut printed_mean, mut split) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut h_zero, mut h_far) = (0.0f64, 0.0f64);
    for (x, s) in pts.iter().zip(samples) {
        let (sv, rho) = (x[0], x[2]);
        match s {
            Ok(f) => {
                eig = eig.max(f.eigen_defect);
                block = block.max(block_dev(&f.block, &bisector_block_closed(sv, rho)));
                printed_block = printed_block.max(block_dev(&f.block, &bisector_block_printed(sv, rho)));
                mean = mean.max((f.mean - bisector_mean_curvature_closed(m, sv, rho)).abs());
                printed_mean = printed_mean.max((f.mean - bisector_mean_curvature_printed(m, sv, rho)).abs());
                split = split.max(f.splitting);
            }
            Err(e) => errors.push(e),
        }
        h_zero = h_zero.max(bisector_mean_curvature_closed(m, 0.0, rho).abs());
        h_far = h_far.max((bisector_mean_curvature_closed(m, 20.0, rho) + m as f64).abs());
    }
    report.check(Check::holds(
        "foliation evaluated at every point",
        errors.is_empty(),
        errors.len(),
    ));
    report.check(Check::at_most(
        "normal coordinate is unit and orthogonal",
        split,
        tol.foliation,
    ));
    report.check(Check::at_most(
        "shape operator: d/drho has eigenvalue -tanh(s/2)/2",
        eig,
        tol.foliation,
    ));
    report.check(Check::at_most(
        "second fundamental form 2x2 block vs closed form",
        block,
        tol.foliation,
    ));
    report.check(Check::at_most(
        "mean curvature: trace vs closed form",
        mean,
        tol.mean_curvature,
    ));
    report.check(Check::raw(
        "closed-form H(0, rho) = 0 exactly",
        0.0.into(),
        round_sig(h_zero),
        0.0.into(),
        h_zero == 0.0,
    ));
    report.check(Check::at_most("closed-form |H(20, rho) + m|", h_far, tol.limit));
    report.data(
        "foliation",
        json!({
            "points": pts.len(),
            "published_block_max_deviation": round_sig(printed_block),
            "published_mean_curvature_max_deviation": round_sig(printed_mean),
            "errors": errors,
        }),
    );
}

fn real_foliation(report: &mut Report, n: usize, pts: &[Vec<f64>], cfg: &RunConfig) {
    let tol = &cfg.tolerances;
    let results: Vec<Result<(f64, f64), String>> = pts
        .par_iter()
        .map(|x| {
            let fol =
                second_fundamental_form(&RealFermi { n }, x, DerivativeRoute::HyperDual).map_err(|e| e.to_string())?;
            let t = x[0].tanh();
            let k = fol.slice_indices.len();
            let eig = (0..k).fold(0.0f64, |a, i| {
                let mut v = vec![0.0; k];
                v[i] = 1.0;
                a.max(fol.eigen_defect(&v, -t))
            });
            Ok((eig, (fol.mean_curvature + (n as f64 - 1.0) * t).abs()))
        })
        .collect();
    let errors: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let (eig, mean) = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .fold((0.0f64, 0.0f64), |(a, b), (e, h)| (a.max(*e), b.max(*h)));
    report.check(Check::holds(
        "foliation evaluated at every point",
        errors.is_empty(),
        errors.len(),
    ));
    report.check(Check::at_most("shape operator equals -tanh(s) Id", eig, tol.foliation));
    report.check(Check::at_most(
        "mean curvature equals -(n-1) tanh(s)",
        mean,
        tol.mean_curvature,
    ));
}

// ---------------------------------------------------------------------------
// weights

/// Smooth test function for the conjugation identity.
struct TestField;

impl ScalarField for TestField {
    fn eval<D: hyperphg::models::Real>(&self, x: &[D]) -> D {
        let mut acc = (x[0] * 0.3).cos();
        for (i, v) in x.iter().enumerate().skip(1) {
            acc += (*v * (0.2 + 0.1 * i as f64)).sin();
        }
        acc + 2.0
    }
}

fn weight_chart(kind: WeightKind) -> Chart {
    match kind {
        WeightKind::Real(n) => Chart::RealFermi(n),
        WeightKind::Complex(m) => Chart::Bisector(m),
    }
}

fn weight_scan(cfg: &RunConfig, report: &mut Report) {
    let wc = &cfg.weight;
    let tol = &cfg.tolerances;
    let spec = WeightSpec::new(wc.kind, wc.delta1, wc.delta2);
    let admissible = match wc.lambda {
        None => spec.check_admissible(),
        Some(_) => spec.check_delta2(),
    };
    if let Err(e) = admissible {
        report.check(Check::holds("weight hypotheses", false, e.to_string()));
        return;
    }
    report.check(Check::holds("weight hypotheses", true, "satisfied"));
    match wc.lambda {
        None => match certify_positivity(&spec, wc.resolution) {
            Ok(scan) => {
                report.check(Check::raw(
                    "positivity scan: infimum > 0",
                    json!("> 0"),
                    round_sig(scan.infimum),
                    Value::Null,
                    scan.pass,
                ));
                report.data("scan", scan_json(&scan));
            }
            Err(e) => report.check(Check::holds("positivity scan", false, e.to_string())),
        },
        Some(lambda) => match shifted_interval(&spec, lambda, wc.resolution) {
            Ok(r) => {
                report.check(Check::raw(
                    "delta1 inside the shifted Dirichlet interval",
                    json!([round_sig(r.interval.0), round_sig(r.interval.1)]),
                    round_sig(spec.delta1),
                    Value::Null,
                    r.delta1_inside,
                ));
                report.check(Check::raw(
                    "shifted positivity scan: infimum > 0",
                    json!("> 0"),
                    round_sig(r.scan.infimum),
                    Value::Null,
                    r.scan.pass,
                ));
                report.data("scan", scan_json(&r.scan));
            }
            Err(e) => report.check(Check::holds("shifted positivity scan", false, e.to_string())),
        },
    }

    let chart = weight_chart(wc.kind);
    let mut rng = stream(cfg.seed, 2);
    let pts: Vec<Vec<f64>> = (0..wc.samples).map(|_| sample_model_coords(chart, &mut rng)).collect();
    let limit = large_s_limit(&spec);
    let far = pts
        .iter()
        .map(|x| {
            let mut y = x.clone();
            y[0] = 20.0;
            (weight_functional_closed(&spec, &y) - limit).abs()
        })
        .fold(0.0f64, f64::max);
    report.check(Check::at_most(
        "functional at s = 20 vs delta1 (H - delta1)",
        far,
        tol.limit,
    ));
    report.data("large_s_limit", limit);

    type Row = Result<(f64, f64, f64, f64, f64), String>;
    let rows: Vec<Row> = pts
        .par_iter()
        .map(|x| {
            let c = weight_functional_closed(&spec, x);
            let hd = weight_functional_numeric(&spec, x, DerivativeRoute::HyperDual).map_err(|e| e.to_string())?;
            let fd =
                weight_functional_numeric(&spec, x, DerivativeRoute::FiniteDifference).map_err(|e| e.to_string())?;
            let id = identity_residual(&spec, &TestField, x, DerivativeRoute::HyperDual).map_err(|e| e.to_string())?;
            let printed = weight_functional_printed(&spec, x);
            Ok(((c - hd).abs(), (c - fd).abs(), id, (printed - hd).abs(), c))
        })
        .collect();
    let errors: Vec<&String> = rows.iter().filter_map(|r| r.as_ref().err()).collect();
    let ok: Vec<&(f64, f64, f64, f64, f64)> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
    let worst = |f: fn(&(f64, f64, f64, f64, f64)) -> f64| ok.iter().fold(0.0f64, |a, r| a.max(f(r)));
    report.check(Check::holds(
        "numeric functional evaluated at every sample",
        errors.is_empty(),
        errors.len(),
    ));
    report.check(Check::at_most(
        "closed form vs hyper-dual Laplacian",
        worst(|r| r.0),
        tol.laplacian,
    ));
    report.check(Check::at_most(
        "closed form vs finite-difference Laplacian",
        worst(|r| r.1),
        tol.laplacian,
    ));
    report.check(Check::at_most(
        "conjugation identity residual",
        worst(|r| r.2),
        tol.identity,
    ));
    report.data("published_lines_max_deviation", round_sig(worst(|r| r.3)));
    report.data("samples", ok.len());

    report.table = Some(line_grid(&spec, wc.resolution));
}

fn scan_json(s: &hyperphg::weights::ScanReport) -> Value {
    json!({
        "infimum": round_sig(s.infimum),
        "closed_box_infimum": round_sig(s.closed_box_infimum),
        "argmin": s.argmin.iter().map(|(k, v)| json!({ "name": k, "value": v })).collect::<Vec<_>>(),
        "resolution": s.resolution,
        "epsilon": s.epsilon,
        "nodes": s.nodes,
        "domain": s.domain,
        "shift": s.shift,
    })
}

fn line_grid(spec: &WeightSpec, resolution: f64) -> Table {
    let steps = (1.0 / resolution).ceil() as usize;
    let axis: Vec<f64> = (0..=steps).map(|k| (k as f64 * resolution).min(1.0)).collect();
    let ts: &[f64] = match spec.kind {
        WeightKind::Complex(_) => &[0.0, 1.0],
        WeightKind::Real(_) => &[0.0],
    };
    let mut rows = Vec::new();
    for &a in &axis {
        for &b in &axis {
            for &t in ts {
                let (u1, u2, u3) = line_terms(spec, LineCoordinates { a, b, t });
                rows.push(vec![a, b, t, u1, u2, u3, u1 + u2 + u3]);
            }
        }
    }
    Table {
        headers: ["a", "b", "t", "u1", "u2", "u3", "total"].map(String::from).to_vec(),
        rows,
    }
}

// ---------------------------------------------------------------------------
// indicial data

fn spectrum_of(cfg: &RunConfig) -> Result<ModeSpectrum, String> {
    match &cfg.spectrum.source {
        SpectrumSource::EinsteinComplex(m) => einstein_complex_spectrum(*m).map_err(|e| e.to_string()),
        SpectrumSource::Explicit { hcal, lambdas } => Ok(ModeSpectrum {
            hcal: *hcal,
            modes: lambdas
                .iter()
                .enumerate()
                .map(|(i, l)| Mode {
                    lambda: *l,
                    multiplicity: 1,
                    label: format!("mode {i}"),
                })
                .collect(),
        }),
    }
}

fn indicial(cfg: &RunConfig, report: &mut Report) {
    let tol = cfg.tolerances.exact;
    let spectrum = match spectrum_of(cfg) {
        Ok(s) => s,
        Err(e) => return report.check(Check::holds("spectrum", false, e)),
    };
    let set = match spectrum.critical_weights() {
        Ok(s) => s,
        Err(e) => return report.check(Check::holds("critical weights are real", false, e.to_string())),
    };
    let h = spectrum.hcal;
    let mut modes = Vec::new();
    let mut symbol_ok = true;
    let mut zero_interval_ok = true;
    let mut has_zero_mode = false;
    for (mode, (lo, hi)) in spectrum.modes.iter().zip(&set.pairs) {
        for mu in [lo, hi] {
            symbol_ok &= indicial_symbol(mode.lambda, h, mu)
                .map(|v| v.is_zero())
                .unwrap_or(false);
        }
        let interval = dirichlet_interval(mode.lambda, h).ok();
        if mode.lambda == Rational::from_integer(0) {
            has_zero_mode = true;
            zero_interval_ok &= interval
                .as_ref()
                .is_some_and(|(a, b)| a.is_zero() && b == &ExactWeight::rational(h));
        }
        modes.push(json!({
            "label": mode.label,
            "lambda": mode.lambda.to_string(),
            "multiplicity": mode.multiplicity,
            "mu_minus": weight_json(lo),
            "mu_plus": weight_json(hi),
            "dirichlet_interval": interval.map(|(a, b)| json!([weight_json(&a), weight_json(&b)])),
        }));
    }
    report.data("hcal", h.to_string());
    report.data("modes", modes);
    report.data("mu_plus", weight_json(&set.mu_plus));
    report.data("mu_minus", weight_json(&set.mu_minus));
    report.data("mu_plus_max", weight_json(&set.mu_plus_max));
    report.check(Check::holds(
        "indicial symbol vanishes exactly at both roots",
        symbol_ok,
        symbol_ok,
    ));
    if has_zero_mode {
        report.check(Check::holds(
            "lambda = 0 gives the interval ]0, H[",
            zero_interval_ok,
            zero_interval_ok,
        ));
    }

    let generators = cfg.spectrum.generators.clone().unwrap_or_else(|| {
        let mut g: Vec<ExactWeight> = set.pairs.iter().map(|p| p.1.clone()).collect();
        g.push(ExactWeight::rational(cfg.spectrum.step));
        g.sort();
        g.dedup();
        g
    });
    report.data("generators", generators.iter().map(weight_json).collect::<Vec<_>>());
    let steps = match ladder(&set.mu_plus, &generators, cfg.spectrum.ladder) {
        Ok(l) => l,
        Err(e) => return report.check(Check::holds("ladder", false, e.to_string())),
    };
    report.data("ladder", steps.iter().map(weight_json).collect::<Vec<_>>());
    let increasing = steps.first().is_some_and(ExactWeight::is_zero) && steps.windows(2).all(|p| p[0] < p[1]);
    report.check(Check::holds(
        "ladder starts at 0 and increases strictly",
        increasing,
        steps.len(),
    ));

    if let SpectrumSource::EinsteinComplex(m) = cfg.spectrum.source {
        let mf = m as f64;
        let want = [
            mf,
            0.5 * (mf + (mf * mf + 8.0).sqrt()),
            0.5 * (mf + (mf * mf + 2.0 * mf + 5.0).sqrt()),
            mf + 1.0,
        ];
        let mut got: Vec<&ExactWeight> = set.pairs.iter().map(|p| &p.1).collect();
        got.sort();
        let mut expect = want.to_vec();
        expect.sort_by(f64::total_cmp);
        let dev = got
            .iter()
            .zip(&expect)
            .fold(0.0f64, |a, (g, e)| a.max((g.value() - e).abs()));
        report.check(Check::at_most("upper weights vs closed forms", dev, tol));
        report.check(Check::holds(
            "largest upper weight is m + 1 exactly",
            set.mu_plus_max == ExactWeight::integer(m as i64 + 1),
            set.mu_plus_max.expr(),
        ));
        let default_gens = cfg.spectrum.generators.is_none() && cfg.spectrum.step == Rational::new(1, 2);
        if m == 2 && default_gens && steps.len() >= 5 {
            let want = [0.0, 0.5, 3f64.sqrt() - 1.0, 0.5 * (13f64.sqrt() - 2.0), 1.0];
            let dev = steps
                .iter()
                .zip(want)
                .fold(0.0f64, |a, (s, w)| a.max((s.value() - w).abs()));
            report.check(Check::at_most("m = 2 ladder a_0..a_4 vs closed forms", dev, tol));
        }
    }
}

fn monoid(cfg: &RunConfig, report: &mut Report) {
    let mc = &cfg.monoid;
    let elems = match monoid_enumerate(&mc.generators, mc.bound) {
        Ok(e) => e,
        Err(e) => return report.check(Check::holds("enumeration", false, e.to_string())),
    };
    let sorted = elems.windows(2).all(|p| p[0] < p[1]);
    report.check(Check::holds("elements ascend strictly", sorted, elems.len()));
    report.check(Check::holds(
        "contains 0",
        elems.first().is_some_and(ExactWeight::is_zero),
        true,
    ));
    let set: std::collections::HashSet<&ExactWeight> = elems.iter().collect();
    let slack = hyperphg::indicial::BOUND_SLACK;
    let gens_in = mc
        .generators
        .iter()
        .filter(|g| g.value() <= mc.bound + slack)
        .all(|g| set.contains(g));
    report.check(Check::holds("generators below the bound are elements", gens_in, true));
    let missing = elems
        .par_iter()
        .map(|a| {
            elems
                .iter()
                .map(|b| a + b)
                .filter(|s| s.value() <= mc.bound - slack && !set.contains(s))
                .count()
        })
        .sum::<usize>();
    report.check(Check::raw(
        "closed under addition below the bound",
        0.into(),
        missing.into(),
        Value::Null,
        missing == 0,
    ));
    report.data("count", elems.len());
    report.data("elements", elems.iter().map(weight_json).collect::<Vec<_>>());
}

// ---------------------------------------------------------------------------
// polyhomogeneous recursion

pub fn build_problem(p: &PhgConfig) -> Result<ModelProblem, String> {
    let op = RadialOperator::new(p.hcal, p.lambdas.clone())
        .and_then(|o| o.with_s0(p.s0))
        .map_err(|e| e.to_string())?;
    let modes = op.modes();
    let quadratic = p
        .quadratic
        .iter()
        .map(|q| QuadraticTerm {
            output: q.output,
            left: q.left,
            right: q.right,
            coeff: q.coeff,
        })
        .collect();
    let forcing = (0..modes)
        .map(|i| {
            PolySeries::from_terms(
                p.forcing
                    .iter()
                    .filter(|f| f.mode == i)
                    .map(|f| PolyTerm::new(f.sigma, f.tau.clone(), f.coeff)),
            )
        })
        .collect();
    ModelProblem::new(op, quadratic, forcing, p.generators.clone(), p.kernel.clone()).map_err(|e| e.to_string())
}

fn choice_name(c: GreenChoice) -> &'static str {
    match c {
        GreenChoice::Infinity => "G_inf",
        GreenChoice::Zero => "G_0",
        GreenChoice::ZeroResonant => "G_0 resonant",
    }
}

fn run_json(run: &PhgRun) -> Value {
    json!({
        "mu_plus": weight_json(&run.mu_plus),
        "ladder": run.ladder.iter().map(weight_json).collect::<Vec<_>>(),
        "rungs": run.rungs.iter().map(weight_json).collect::<Vec<_>>(),
        "floors": run.floors.iter().map(|f| f.as_ref().map(weight_json)).collect::<Vec<_>>(),
        "psi": run.psi.iter().map(|v| v.iter().map(series_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "phi": run.phi.iter().map(series_json).collect::<Vec<_>>(),
        "residual": run.residual.iter().map(series_json).collect::<Vec<_>>(),
        "steps": run.steps.iter().map(|s| json!({
            "k": s.k,
            "weight": weight_json(&s.weight),
            "case": match s.case { StepCase::AboveAllCritical => "above all critical", StepCase::Mixed => "mixed" },
            "cancellation_defect": s.cancellation_defect,
            "modes": s.modes.iter().map(|m| json!({
                "choice": choice_name(m.choice),
                "component": series_json(&m.component),
                "psi": series_json(&m.psi),
                "dropped_endpoint": series_json(&m.dropped_endpoint),
                "kernel_injected": m.kernel_injected,
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

fn phg_run(cfg: &RunConfig, report: &mut Report) {
    let tol = &cfg.tolerances;
    let problem = match build_problem(&cfg.phg) {
        Ok(p) => p,
        Err(e) => return report.check(Check::holds("model problem is well posed", false, e)),
    };
    let op = problem.operator();
    report.data(
        "critical_pairs",
        (0..op.modes())
            .map(|i| json!([weight_json(op.alpha_minus(i)), weight_json(op.alpha_plus(i))]))
            .collect::<Vec<_>>(),
    );
    let run = match phg_iterate(&problem, cfg.phg.order) {
        Ok(r) => r,
        Err(e) => return report.check(Check::holds("correction recursion", false, e.to_string())),
    };
    for k in 0..=run.order() {
        let floor = run.floors[k]
            .as_ref()
            .map_or(Value::from("none (F = 0)"), |f| f.expr().into());
        report.check(Check::raw(
            format!("floor of F(phi_{k}) >= mu+ + a_{}", k + 1),
            json!(format!(">= {}", run.rungs[k + 1].expr())),
            floor,
            Value::Null,
            run.floor_meets_ladder(k),
        ));
    }
    let on_ladder = run.floors.iter().flatten().all(|f| {
        let d = f - &run.mu_plus;
        d.is_zero() || monoid_enumerate(problem.generators(), d.value()).is_ok_and(|e| e.contains(&d))
    });
    report.check(Check::holds("every floor lies in mu+ + N_L", on_ladder, on_ladder));
    let supported = run
        .psi
        .iter()
        .enumerate()
        .skip(1)
        .all(|(k, modes)| modes.iter().all(|p| p.weights().iter().all(|w| w == &run.rungs[k])));
    report.check(Check::holds(
        "psi_k is supported on the rung mu+ + a_k",
        supported,
        supported,
    ));

    let logs = run.resonant_log_terms(op);
    let resonant_modes: std::collections::BTreeSet<usize> = run
        .steps
        .iter()
        .flat_map(|s| {
            s.modes
                .iter()
                .enumerate()
                .filter(|(_, m)| m.choice == GreenChoice::ZeroResonant && !m.component.is_zero())
                .map(|(i, _)| i)
        })
        .collect();
    let log_modes: std::collections::BTreeSet<usize> = logs.iter().map(|(i, _)| *i).collect();
    report.check(Check::raw(
        "s^k exp(-alpha+ s) terms appear exactly in resonantly forced modes",
        json!(resonant_modes.iter().collect::<Vec<_>>()),
        json!(log_modes.iter().collect::<Vec<_>>()),
        Value::Null,
        resonant_modes == log_modes,
    ));
    report.data(
        "resonant_log_terms",
        logs.iter()
            .map(|(i, t)| json!({ "mode": i, "sigma": t.sigma, "tau_expr": t.tau.expr(), "tau_value": t.tau.value(), "coeff": t.coeff }))
            .collect::<Vec<_>>(),
    );
    report.data("resonance_flag", !logs.is_empty());

    if run.residual.iter().all(PolySeries::is_zero) {
        report.check(Check::holds("F(phi_K) vanishes identically", true, "exact solution"));
        report.data("slope", "skipped: F(phi_K) = 0");
    } else {
        match remainder_slope_check(&problem, &run) {
            Ok(s) => {
                report.check(Check::raw(
                    "remainder slope on the fit window vs -(mu+ + a_{K+1})",
                    round_sig(-s.expected_rate),
                    round_sig(s.slope),
                    round_sig(tol.slope_fraction * s.expected_rate),
                    s.within(tol.slope_fraction),
                ));
                report.check(Check::at_most(
                    "symbolic F(phi_K) vs pointwise evaluation",
                    s.forcing_defect,
                    tol.exact,
                ));
                report.data(
                    "slope",
                    json!({
                        "slope": round_sig(s.slope),
                        "expected_rate": round_sig(s.expected_rate),
                        "relative_error": round_sig(s.relative_error()),
                        "window": [s.window.0, s.window.1],
                        "terminal": s.terminal,
                    }),
                );
                report.table = Some(Table {
                    headers: vec!["s".into(), "log_abs_remainder".into()],
                    rows: s.samples.iter().map(|(a, b)| vec![*a, *b]).collect(),
                });
            }
            Err(e) => report.check(Check::holds("remainder slope", false, e.to_string())),
        }
    }
    report.data("run", run_json(&run));
}
