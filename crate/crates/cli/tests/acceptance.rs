//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Where a criterion quotes a published formula that the numerics refute, the
//! line for the verified formula gates the test and a second `literal` line
//! reports the published formula's failure at the same tolerance. Those
//! literal lines are expected to read FAIL and do not gate.

use std::time::Instant;

use hyperphg::indicial::{einstein_complex_weights, ladder, ExactWeight, Rational};
use hyperphg::models::*;
use hyperphg::phg::*;
use hyperphg::tensor::*;
use hyperphg::weights::*;
use hyperphg_cli::commands;
use hyperphg_cli::config::{CommandName, RunConfig};
use hyperphg_cli::report::Report;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_261_014;

struct Outcome {
    label: String,
    pass: bool,
    gating: bool,
    detail: String,
}

#[derive(Default)]
struct Sheet {
    rows: Vec<Outcome>,
}

impl Sheet {
    fn criterion(&mut self, id: u32, pass: bool, detail: String) {
        self.rows.push(Outcome {
            label: format!("criterion {id}"),
            pass,
            gating: true,
            detail,
        });
    }

    /// The criterion read against the published formula.
    fn literal(&mut self, id: u32, pass: bool, detail: String) {
        self.rows.push(Outcome {
            label: format!("criterion {id} literal"),
            pass,
            gating: false,
            detail,
        });
    }

    fn finish(self) {
        for r in &self.rows {
            println!("{:<20} {}  {}", r.label, if r.pass { "PASS" } else { "FAIL" }, r.detail);
        }
        let gating: Vec<&Outcome> = self.rows.iter().filter(|r| r.gating).collect();
        let green = gating.iter().filter(|r| r.pass).count();
        let red_literal = self.rows.iter().filter(|r| !r.gating && !r.pass).count();
        println!(
            "summary: {green}/{} criteria pass; {red_literal} literal readings of published formulas fail",
            gating.len()
        );
        let failed: Vec<&str> = gating.iter().filter(|r| !r.pass).map(|r| r.label.as_str()).collect();
        if !failed.is_empty() {
            eprintln!("failing: {failed:?}");
            std::process::exit(1);
        }
    }
}

fn rng(k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    r.set_stream(k);
    r
}

fn sample(chart: Chart, bx: &SamplingBox, n: usize, r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| bx.sample(chart, r)).collect()
}

fn random_vec(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-1.0..1.0)).collect()
}

// Closed forms for the bisector foliation, written out independently of the library.

fn tcc(s: f64, rho: f64) -> (f64, f64, f64) {
    ((s / 2.0).tanh(), (s / 2.0).cosh(), (rho / 2.0).cosh())
}

fn oracle_block(s: f64, rho: f64, off_denominator: f64) -> [[f64; 2]; 2] {
    let (t, ch, c) = tcc(s, rho);
    let d = c * c + t * t;
    let sh2 = (rho / 2.0).sinh().powi(2);
    let a = -t * (4.0 + sh2 * (3.0 - t * t)) / (2.0 * d);
    let e = -t * (1.0 + t * t * c * c) / (2.0 * d);
    let b = -rho.sinh() / (off_denominator * ch.powi(3) * d);
    [[a, b], [b, e]]
}

fn oracle_mean(m: usize, s: f64, rho: f64, coeff: f64) -> f64 {
    let (t, ch, c) = tcc(s, rho);
    -t * (m as f64 + coeff / (ch * ch * (c * c + t * t)))
}

fn max_entry_dev(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    (0..4)
        .map(|k| (a[k / 2][k % 2] - b[k / 2][k % 2]).abs())
        .fold(0.0, f64::max)
}

fn criterion_1(sheet: &mut Sheet) {
    let start = Instant::now();
    let bx = SamplingBox::default().with_rho_max(3.0);
    let mut worst = 0.0f64;
    let mut evaluated = true;
    let mut r = rng(1);
    for m in [2, 3] {
        let pts = sample(Chart::Bisector(m), &bx, 100, &mut r);
        for route in [JacobianRoute::Analytic, JacobianRoute::FiniteDifference] {
            let rep = pullback_check(&BisectorToSiegel { m }, &Bisector { m }, &Siegel { m }, &pts, route);
            worst = worst.max(rep.max_deviation);
            evaluated &= rep.evaluated == 100;
        }
    }
    for n in [3, 4] {
        let pts = sample(Chart::RealFermi(n), &bx, 100, &mut r);
        for route in [JacobianRoute::Analytic, JacobianRoute::FiniteDifference] {
            let rep = pullback_check(
                &FermiToUpperHalf { n },
                &RealFermi { n },
                &UpperHalfReal { n },
                &pts,
                route,
            );
            worst = worst.max(rep.max_deviation);
            evaluated &= rep.evaluated == 100;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    sheet.criterion(
        1,
        worst < 1e-6 && evaluated && secs < 10.0,
        format!(
            "pullback max deviation {worst:.3e} < 1e-6 over 100 points x 4 chart pairs x 2 routes, {secs:.2} s < 10 s"
        ),
    );
}

fn criterion_2(sheet: &mut Sheet) {
    let tol = 1e-6;
    let bx = SamplingBox::default().with_rho_max(3.0);
    let mut r = rng(2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut holo, mut real_planes, mut real_model) = (0.0f64, 0.0f64, 0.0f64);
    let mut planes = 0;
    for m in [2usize, 3] {
        let d = 2 * m;
        for x in sample(Chart::Bisector(m), &bx, 500, &mut r) {
            let c = curvature(&Bisector { m }, &x, DerivativeRoute::HyperDual).unwrap();
            let (u, v) = (random_vec(&mut r, d), random_vec(&mut r, d));
            if let Ok(k) = c.sectional(&u, &v) {
                lo = lo.min(k);
                hi = hi.max(k);
                planes += 1;
            }
        }
        for x in sample(Chart::Bisector(m), &bx, 40, &mut r) {
            let c = curvature(&Bisector { m }, &x, DerivativeRoute::HyperDual).unwrap();
            let j = complex_structure_j(m, &x).unwrap();
            let g = &c.metric;
            let u = random_vec(&mut r, d);
            let ju: Vec<f64> = (0..d).map(|i| (0..d).map(|k| j[(i, k)] * u[k]).sum()).collect();
            let dot = |a: &[f64], b: &[f64]| -> f64 {
                (0..d)
                    .map(|i| (0..d).map(|k| a[i] * g[(i, k)] * b[k]).sum::<f64>())
                    .sum()
            };
            let v = random_vec(&mut r, d);
            let (uu, jj) = (dot(&u, &u), dot(&ju, &ju));
            let (vu, vj) = (dot(&v, &u), dot(&v, &ju));
            let w: Vec<f64> = (0..d).map(|i| v[i] - vu / uu * u[i] - vj / jj * ju[i]).collect();
            holo = holo.max((c.sectional(&u, &ju).unwrap() + 1.0).abs());
            real_planes = real_planes.max((c.sectional(&u, &w).unwrap() + 0.25).abs());
        }
    }
    for n in [3usize, 4] {
        for x in sample(Chart::RealFermi(n), &bx, 100, &mut r) {
            let c = curvature(&RealFermi { n }, &x, DerivativeRoute::HyperDual).unwrap();
            if let Ok(k) = c.sectional(&random_vec(&mut r, n), &random_vec(&mut r, n)) {
                real_model = real_model.max((k + 1.0).abs());
            }
        }
    }
    let pass =
        planes >= 1000 && lo >= -1.0 - tol && hi <= -0.25 + tol && holo < tol && real_planes < tol && real_model < tol;
    sheet.criterion(
        2,
        pass,
        format!(
            "{planes} planes in [{lo:.6}, {hi:.6}]; |K(X,JX)+1| {holo:.1e}, |K_totally_real+1/4| {real_planes:.1e}, real |K+1| {real_model:.1e}"
        ),
    );
}

fn criterion_3_4(sheet: &mut Sheet) {
    let mut r = rng(3);
    let (mut eig, mut block, mut block_pub) = (0.0f64, 0.0f64, 0.0f64);
    let (mut mean, mut mean_pub, mut h0, mut h20) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut in_range = true;
    for m in [2usize, 3] {
        for x in sample(Chart::Bisector(m), &SamplingBox::default(), 50, &mut r) {
            let (s, rho) = (x[0], x[2]);
            in_range &= s.abs() <= 5.0 && (0.1..=5.0).contains(&rho);
            let fol = second_fundamental_form(&Bisector { m }, &x, DerivativeRoute::HyperDual).unwrap();
            let mut drho = vec![0.0; fol.slice_indices.len()];
            drho[1] = 1.0;
            eig = eig.max(fol.eigen_defect(&drho, -0.5 * (s / 2.0).tanh()));
            let b = bisector_frame_block(m, &x, &fol);
            block = block.max(max_entry_dev(&b, &oracle_block(s, rho, 4.0)));
            block_pub = block_pub.max(max_entry_dev(&b, &oracle_block(s, rho, 2.0)));
            mean = mean.max((fol.mean_curvature - oracle_mean(m, s, rho, 1.0)).abs());
            mean_pub = mean_pub.max((fol.mean_curvature - oracle_mean(m, s, rho, 2.0)).abs());
            for coeff in [1.0, 2.0] {
                h0 = h0.max(oracle_mean(m, 0.0, rho, coeff).abs());
                h20 = h20.max((oracle_mean(m, 20.0, rho, coeff) + m as f64).abs());
            }
            // the library closed form must be the verified one
            mean = mean.max((bisector_mean_curvature_closed(m, s, rho) - oracle_mean(m, s, rho, 1.0)).abs());
            block = block.max(max_entry_dev(
                &bisector_block_closed(s, rho),
                &oracle_block(s, rho, 4.0),
            ));
        }
    }
    let tol = 1e-8;
    sheet.criterion(
        3,
        in_range && eig < tol && block < tol,
        format!("100 points: d/drho eigen defect {eig:.1e}, 2x2 block (off-diagonal /4) max dev {block:.1e} < 1e-8"),
    );
    sheet.literal(
        3,
        block_pub < tol,
        format!(
            "published off-diagonal -sinh(rho)/(2cosh^3(s/2)(cosh^2(rho/2)+tanh^2(s/2))) deviates by {block_pub:.3e}"
        ),
    );
    sheet.criterion(
        4,
        mean < tol && h0 == 0.0 && h20 < 1e-4,
        format!(
            "trace vs closed form (coefficient 1) {mean:.1e} < 1e-8; H(0,rho) = {h0}; |H(20,rho)+m| {h20:.1e} < 1e-4"
        ),
    );
    sheet.literal(
        4,
        mean_pub < tol,
        format!("published closed form (coefficient 2) deviates by {mean_pub:.3e}"),
    );
}

/// Smooth test function for the conjugation identity.
struct Probe;

impl ScalarField for Probe {
    fn eval<D: Real>(&self, x: &[D]) -> D {
        (x[0] * 0.4).sin() + x[1] * x[1] * 0.3 + 1.5
    }
}

fn criterion_5(sheet: &mut Sheet) {
    let kinds = [
        WeightKind::Real(3),
        WeightKind::Real(4),
        WeightKind::Real(5),
        WeightKind::Complex(2),
        WeightKind::Complex(3),
    ];
    let mut r = rng(5);
    let (mut specs, mut certified) = (0, 0);
    let (mut lap_hd, mut lap_fd, mut limit, mut ident, mut published) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for kind in kinds {
        let chart = match kind {
            WeightKind::Real(n) => Chart::RealFermi(n),
            WeightKind::Complex(m) => Chart::Bisector(m),
        };
        let h = match kind {
            WeightKind::Real(n) => n as f64 - 1.0,
            WeightKind::Complex(m) => m as f64,
        };
        for spec in admissible_grid(kind, 5) {
            specs += 1;
            if certify_positivity(&spec, 0.05).is_ok_and(|s| s.pass) {
                certified += 1;
            }
            for x in (0..2).map(|_| sample_model_coords(chart, &mut r)) {
                let c = weight_functional_closed(&spec, &x);
                lap_hd =
                    lap_hd.max((c - weight_functional_numeric(&spec, &x, DerivativeRoute::HyperDual).unwrap()).abs());
                let fd = weight_functional_numeric(&spec, &x, DerivativeRoute::FiniteDifference).unwrap();
                lap_fd = lap_fd.max((c - fd).abs());
                published = published.max((weight_functional_printed(&spec, &x) - fd).abs());
                ident = ident.max(identity_residual(&spec, &Probe, &x, DerivativeRoute::HyperDual).unwrap());
                let mut far = x.clone();
                far[0] = 20.0;
                limit = limit.max((weight_functional_closed(&spec, &far) - spec.delta1 * (h - spec.delta1)).abs());
            }
        }
    }
    let pass = certified == specs && specs == 125 && lap_hd < 1e-5 && lap_fd < 1e-5 && limit < 1e-4 && ident < 1e-5;
    sheet.criterion(
        5,
        pass,
        format!(
            "{certified}/{specs} grid specs certified; closed vs numeric {lap_hd:.1e} (hyper-dual), {lap_fd:.1e} (finite diff) < 1e-5; s=20 limit {limit:.1e}; identity {ident:.1e}"
        ),
    );
    sheet.literal(
        5,
        published < 1e-5,
        format!("published u2/u3 lines deviate from the numeric functional by {published:.3e}"),
    );
}

fn criterion_6(sheet: &mut Sheet) {
    let mut dev = 0.0f64;
    let mut max_ok = true;
    for m in 2u32..=6 {
        let got = einstein_complex_weights(m).unwrap();
        let mf = m as f64;
        let mut want = [
            mf,
            0.5 * (mf + (mf * mf + 8.0).sqrt()),
            0.5 * (mf + (mf * mf + 2.0 * mf + 5.0).sqrt()),
            mf + 1.0,
        ];
        want.sort_by(f64::total_cmp);
        dev = got.iter().zip(want).fold(dev, |a, (g, w)| a.max((g.value() - w).abs()));
        max_ok &= got.len() == 4 && got.iter().max() == Some(&ExactWeight::integer(m as i64 + 1));
    }
    let mut gens = einstein_complex_weights(2).unwrap();
    gens.push(ExactWeight::rational(Rational::new(1, 2)));
    let steps = ladder(&ExactWeight::integer(2), &gens, 4).unwrap();
    let want = [0.0, 0.5, 3f64.sqrt() - 1.0, 0.5 * (13f64.sqrt() - 2.0), 1.0];
    let ldev = steps
        .iter()
        .zip(want)
        .fold(0.0f64, |a, (s, w)| a.max((s.value() - w).abs()));
    sheet.criterion(
        6,
        dev < 1e-12 && max_ok && steps.len() == 5 && ldev < 1e-12,
        format!(
            "weights m=2..6 max dev {dev:.1e}, max = m+1 exact: {max_ok}; m=2 ladder [{}] dev {ldev:.1e}",
            steps.iter().map(ExactWeight::expr).collect::<Vec<_>>().join(", ")
        ),
    );
}

fn criterion_7(sheet: &mut Sheet) {
    let mut r = rng(7);
    let mut pairs = 0;
    let mut worst = 0.0f64;
    let mut structural = true;
    let mut cases = 0;
    while pairs < 20 {
        let hcal = Rational::new(r.random_range(1..=12), r.random_range(1..=3));
        let lambda = Rational::new(r.random_range(-6..=24), r.random_range(1..=4));
        let Ok(op) = RadialOperator::scalar(hcal, lambda) else {
            continue;
        };
        pairs += 1;
        let ap = op.alpha_plus(0).clone();
        let am = op.alpha_minus(0).clone();
        let mid = (&ap + &am).scale(Rational::new(1, 2));
        let above = &ap + &ExactWeight::rational(Rational::new(r.random_range(1..=9), 4));
        for sigma in 0..=3u32 {
            for (tau, infinity) in [(above.clone(), true), (mid.clone(), false), (ap.clone(), false)] {
                let coeff = r.random_range(0.5..2.0);
                let u = PolySeries::monomial(sigma, tau.clone(), coeff);
                let g = if infinity { op.g_inf(0, &u) } else { op.g_zero(0, &u) }.unwrap();
                let back = op.apply_radial(0, &g).unwrap();
                worst = worst.max((&back - &u).max_abs_coeff() / coeff);
                let top = g.max_sigma_at(&tau).unwrap();
                structural &= (top == sigma + 1) == (tau == ap) && top <= sigma + 1;
                cases += 1;
            }
        }
    }
    sheet.criterion(
        7,
        worst <= 1e-12 && structural,
        format!("{pairs} (H, lambda) pairs, {cases} monomials: max |L G u - u| {worst:.1e}; sigma+1 iff tau = alpha+: {structural}"),
    );
}

fn criterion_8(sheet: &mut Sheet) {
    let start = Instant::now();
    let w = |s: &str| s.parse::<ExactWeight>().unwrap();
    let problem = ModelProblem::scalar(
        Rational::from_integer(3),
        Rational::from_integer(0),
        1.0,
        PolySeries::exponential(w("4"), 1.0),
        vec![w("1"), w("3")],
    )
    .unwrap();
    let run = phg_iterate(&problem, 4).unwrap();
    let floors: Vec<ExactWeight> = run.floors.iter().map(|f| f.clone().unwrap()).collect();
    let pinned = floors == ["4", "8", "8", "8", "8"].map(w);
    let bound = (0..=4).all(|k| run.floor_meets_ladder(k));
    let ends = floors[0] == run.rungs[1] && floors[4] == run.rungs[5];
    let first = run.psi[1][0] == PolySeries::exponential(w("4"), -0.25);
    let last = (&run.residual[0] - &PolySeries::exponential(w("8"), 1.0 / 16.0)).max_abs_coeff() <= 1e-15;
    let slope = remainder_slope_check(&problem, &run).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rungs: Vec<String> = run.rungs[1..].iter().map(ExactWeight::expr).collect();
    let floor_s: Vec<String> = floors.iter().map(ExactWeight::expr).collect();
    sheet.criterion(
        8,
        pinned && bound && ends && first && last && slope.within(0.05) && secs < 30.0,
        format!(
            "floors [{}] >= rungs [{}], equal at k=0 and K; psi_1 = -exp(-4s)/4; F(phi_4) = exp(-8s)/16: {last}; slope {:.4} vs -{} (rel err {:.1e} <= 5%); {secs:.2} s < 30 s",
            floor_s.join(", "),
            rungs.join(", "),
            slope.slope,
            slope.expected_rate,
            slope.relative_error()
        ),
    );
    let equal_all = floors.iter().zip(&run.rungs[1..]).all(|(f, r)| f == r);
    sheet.literal(
        8,
        equal_all,
        format!(
            "floor after step k equals mu+ + a_(k+1) for every k: floors [{}] vs [{}]",
            floor_s.join(", "),
            rungs.join(", ")
        ),
    );
}

fn criterion_9(sheet: &mut Sheet) {
    let mut cfg = RunConfig::defaults();
    cfg.seed = 7;
    let mut identical = 0;
    let mut differs = Vec::new();
    for c in CommandName::ALL {
        let a = Report::reproducible_part(&commands::run(c, &cfg).to_json());
        let b = Report::reproducible_part(&commands::run(c, &cfg).to_json());
        if a == b {
            identical += 1;
        } else {
            differs.push(c.as_str());
        }
    }
    let mut other = cfg.clone();
    other.seed = 8;
    let sensitive = Report::reproducible_part(&commands::run(CommandName::VerifyMetric, &cfg).to_json())["checks"]
        != Report::reproducible_part(&commands::run(CommandName::VerifyMetric, &other).to_json())["checks"];
    sheet.criterion(
        9,
        differs.is_empty() && sensitive,
        format!("{identical}/6 commands reproduce checks and data at 12 significant digits (seed 7); a different seed changes the sampled values: {sensitive}"),
    );
}

fn main() {
    let mut sheet = Sheet::default();
    criterion_1(&mut sheet);
    criterion_2(&mut sheet);
    criterion_3_4(&mut sheet);
    criterion_5(&mut sheet);
    criterion_6(&mut sheet);
    criterion_7(&mut sheet);
    criterion_8(&mut sheet);
    criterion_9(&mut sheet);
    sheet.finish();
}
