//! End-to-end acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, and the process exits nonzero
//! if any of them fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use poisson_sched::chain_analysis::analyze;
use poisson_sched::chain_model::{build_matrices, ChainMatrices, ChainSpec};
use poisson_sched::chain_sim::{empirical_frequencies, frequency_standard_errors, realized_cost, simulate_chain};
use poisson_sched::controllers::{bound_exponential, bound_impulsive, bound_pulse};
use poisson_sched::estimators::{bound_scalar_estimation, bound_state_estimation, kalman_step, KalmanState};
use poisson_sched::harness::{builtin, run_scenario, write_artifacts, ScenarioRun};
use poisson_sched::plant_models::{
    discretize_linear, exact_scalar_step, two_tank_drift, water_tank_gamma, DiscretizedStep, LinearPlant, ScalarPlant,
};
use poisson_sched::policy_solver::{constant_cost, solve_k_ode, solve_stationary, DEFAULT_ODE_STEPS};
use poisson_sched::rng::seeded_rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn mats(sample: &[f64], release: &[f64], xi: &[f64]) -> Result<ChainMatrices, String> {
    build_matrices(&ChainSpec::from_sensor_rates(sample, release, xi).map_err(err)?).map_err(err)
}

fn two_sensor(xi: [f64; 2]) -> Result<ChainMatrices, String> {
    mats(&[1.0, 1.0], &[10.0, 10.0], &xi)
}

/// Stationary gains for the two-sensor example.
fn gains() -> Outcome {
    let m = two_sensor([0.5, 0.1])?;
    let start = Instant::now();
    let p = solve_stationary(&m).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let k = &p.gains;
    let got = [k[(0, 0)], k[(1, 2)], k[(2, 1)], k[(3, 2)]];
    let want = [-0.0228, -0.2272, -0.0228, -0.0272];
    let close = got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-3);
    let others_zero = k.iter().filter(|v| v.abs() > 1e-12).count() == 4;
    check(
        close && others_zero && elapsed < 1.0,
        format!("gains {got:.4?}, solved in {:.1} ms", elapsed * 1e3),
    )
}

/// Analytic and simulated sampling frequencies.
fn frequencies() -> Outcome {
    let table = [
        ([0.1, 0.1], [0.8040, 0.8040]),
        ([0.5, 0.1], [0.6578, 0.8280]),
        ([1.0, 0.1], [0.4657, 0.8560]),
        ([2.0, 0.1], [0.0451, 0.9045]),
    ];
    let mut worst_row = 0.0f64;
    for (xi, expected) in table {
        let m = two_sensor(xi)?;
        let rep = analyze(&m, &solve_stationary(&m).map_err(err)?).map_err(err)?;
        for s in 0..2 {
            worst_row = worst_row.max((rep.f[s] - expected[s]).abs());
        }
    }
    let m = two_sensor([0.5, 0.1])?;
    let p = solve_stationary(&m).map_err(err)?;
    let rep = analyze(&m, &p).map_err(err)?;
    let headline = (rep.f[0] - 0.66).abs() <= 0.01 && (rep.f[1] - 0.83).abs() <= 0.01;
    let trace = simulate_chain(&p, m.spec.idle(), 1e5, 11).map_err(err)?;
    let f_hat = empirical_frequencies(&trace);
    let se = frequency_standard_errors(&trace);
    let z: Vec<f64> = (0..2).map(|s| (f_hat[s] - rep.f[s]) / se[s]).collect();
    check(
        headline && worst_row <= 5e-3 && z.iter().all(|v| v.abs() <= 3.0),
        format!(
            "f = ({:.4}, {:.4}), worst table deviation {worst_row:.1e}, simulated z-scores ({:.2}, {:.2})",
            rep.f[0], rep.f[1], z[0], z[1]
        ),
    )
}

fn run(name: &str) -> Result<ScenarioRun, String> {
    run_scenario(&builtin(name).map_err(err)?).map_err(err)
}

fn violations(run: &ScenarioRun) -> usize {
    run.report.sensors.iter().map(|s| s.violations).sum()
}

/// Scalar estimation bounds and their Monte Carlo check.
fn scalar_estimation() -> Outcome {
    let b1 = bound_scalar_estimation(0.7, 1.0, 0.3, 0.66).map_err(err)?.value;
    let b2 = bound_scalar_estimation(0.3, 1.0, 0.3, 0.83).map_err(err)?.value;
    let analytic = (b1 - 0.64).abs() <= 0.01 && (b2 - 0.90).abs() <= 0.01;
    let r = run("estimation-scalar")?;
    check(
        analytic && r.report.pass,
        format!(
            "bounds ({b1:.3}, {b2:.3}); {} replicates, {} points over bound + 3 SE",
            r.report.replicates,
            violations(&r)
        ),
    )
}

/// Matrix estimation bounds for the two-tank plants.
fn vector_estimation() -> Outcome {
    let eye = DMatrix::<f64>::identity(2, 2);
    let g1 = water_tank_gamma(0.2, 1.0, 0.4, 9.8).map_err(err)?;
    let g2 = water_tank_gamma(0.1, 1.0, 0.54, 9.8).map_err(err)?;
    let plant = |g: f64| LinearPlant::with_state_measurement(two_tank_drift(g, g), eye.clone(), &eye * 0.09);
    let b1 = bound_state_estimation(&plant(g1).map_err(err)?, 0.66).map_err(err)?.value;
    let b2 = bound_state_estimation(&plant(g2).map_err(err)?, 0.83).map_err(err)?.value;
    let analytic = (b1 - 2.05).abs() <= 0.02 && (b2 - 2.21).abs() <= 0.02;
    let r = run("estimation-vector")?;
    check(
        analytic && r.report.pass,
        format!(
            "bounds ({b1:.3}, {b2:.3}); {} replicates, {} points over bound + 3 SE",
            r.report.replicates,
            violations(&r)
        ),
    )
}

/// Finite-horizon and stationary solutions agree, and the predicted cost
/// matches simulated cost.
fn cost_consistency() -> Outcome {
    let m = two_sensor([0.5, 0.1])?;
    let p = solve_stationary(&m).map_err(err)?;
    let horizon = 100.0;
    let sol = solve_k_ode(&m, constant_cost(&m), &p.k0, horizon, DEFAULT_ODE_STEPS).map_err(err)?;
    let ode_gap = (&sol.k_traj[0] - p.k0.add_scalar(p.rho * horizon)).amax();

    let costs: Vec<f64> = (0..20)
        .map(|i| simulate_chain(&p, m.spec.idle(), 1e4, 1000 + i).map(|t| realized_cost(&t, &p, m.spec.weights())))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    check(
        ode_gap <= 1e-6 && (mean - p.rho).abs() <= 3.0 * se,
        format!(
            "k(0) offset error {ode_gap:.1e}; ρ = {:.5}, simulated {mean:.5} ± {se:.1e}",
            p.rho
        ),
    )
}

/// Free sampling and the two-state chain.
fn degenerate_cases() -> Outcome {
    let m = two_sensor([0.0, 0.0])?;
    let p = solve_stationary(&m).map_err(err)?;
    let zero = p.k0.iter().all(|&v| v == 0.0) && p.rho == 0.0 && p.gains.iter().all(|&v| v == 0.0);
    let (a, b) = (1.3, 7.0);
    let m2 = mats(&[a], &[b], &[0.0])?;
    let rep = analyze(&m2, &solve_stationary(&m2).map_err(err)?).map_err(err)?;
    let exact = a * b / (a + b);
    let f_err = (rep.f[0] - exact).abs();
    check(
        zero && p.residual <= 1e-12 && f_err <= 1e-10,
        format!("zero policy residual {:.1e}; two-state frequency error {f_err:.1e}", p.residual),
    )
}

fn phase_mean(r: &ScenarioRun, sensor: usize, phase: usize) -> f64 {
    r.report.sensors[sensor].phases[phase].mean_sq.unwrap_or(f64::NAN)
}

/// Controller bound limits and closed-loop Monte Carlo.
fn controllers() -> Outcome {
    let (g, s, e, f): (f64, f64, f64, f64) = (0.7, 1.0, 0.3, 0.66);
    let high = e * e + s * s / (2.0 * g) * (1.0 - (-2.0 * g / f).exp());
    let lim_pulse = (bound_pulse(g, s, e, f, 1e-10, 0.0).map_err(err)? - high).abs();
    let lim_exp = (bound_exponential(g, s, e, f, 0.0).map_err(err)? - high).abs();
    let imp_vs_est = (bound_impulsive(g, s, e, f).map_err(err)?
        - bound_scalar_estimation(g, s, e, f).map_err(err)?.value)
        .abs();
    let limits = lim_pulse <= 1e-9 && lim_exp <= 1e-9 && imp_vs_est <= 1e-9;

    let imp = run("control-impulsive")?;
    let pulse = run("control-pulse")?;
    let expo = run("control-exponential")?;
    // Same seed, same streams: the noise draws are paired across controllers.
    let ordered = (0..2).all(|sn| phase_mean(&expo, sn, 0) >= phase_mean(&imp, sn, 0));
    let all_pass = imp.report.pass && pulse.report.pass && expo.report.pass;
    check(
        limits && all_pass && ordered,
        format!(
            "limit errors ({lim_pulse:.1e}, {lim_exp:.1e}); bound checks impulsive {} pulse {} exponential {}; \
             mean sq exponential ({:.3}, {:.3}) vs impulsive ({:.3}, {:.3})",
            imp.report.pass,
            pulse.report.pass,
            expo.report.pass,
            phase_mean(&expo, 0, 0),
            phase_mean(&expo, 1, 0),
            phase_mean(&imp, 0, 0),
            phase_mean(&imp, 1, 0),
        ),
    )
}

/// Composite Simpson for the two-tank noise integral, using
/// `e^{Aτ} = e^{-γτ}[[1, 0], [γτ, 1]]`.
fn simpson_q(gamma: f64, dt: f64) -> DMatrix<f64> {
    let n = 4000;
    let h = dt / n as f64;
    let mut q = DMatrix::zeros(2, 2);
    for k in 0..=n {
        let t = k as f64 * h;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, gamma * t, 1.0]) * (-gamma * t).exp();
        q += (&e * e.transpose()) * w;
    }
    q * (h / 3.0)
}

/// Plant discretization, Kalman update and OU variance.
fn plant_numerics() -> Outcome {
    let eye = DMatrix::<f64>::identity(2, 2);
    let gamma = 0.7;
    let plant = LinearPlant::with_state_measurement(two_tank_drift(gamma, gamma), eye.clone(), &eye * 0.09)
        .map_err(err)?;
    let step = discretize_linear(&plant, 0.9).map_err(err)?;
    let quad = (&step.q - simpson_q(gamma, 0.9)).amax();

    let (s1, s2) = (discretize_linear(&plant, 0.3).map_err(err)?, discretize_linear(&plant, 0.6).map_err(err)?);
    let semigroup = (&step.f - &s2.f * &s1.f)
        .amax()
        .max((&step.q - (&s2.f * &s1.q * s2.f.transpose() + &s2.q)).amax());

    // Scalar Kalman update against conditioning the joint Gaussian of (z, y).
    let (m0, p0, f, q, c, r, y) = (0.3, 0.8, 0.6, 0.25, 1.7, 0.09, -0.45);
    let state = KalmanState {
        x_hat: DVector::from_element(1, m0),
        p: DMatrix::from_element(1, 1, p0),
        t: 0.0,
    };
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let kstep = DiscretizedStep::new(one(f), one(q), 1.0).map_err(err)?;
    let post = kalman_step(&state, &kstep, &one(c), &one(r), &DVector::from_element(1, y)).map_err(err)?;
    let (mz, pz) = (f * m0, f * p0 * f + q);
    let (czy, cyy) = (pz * c, c * pz * c + r);
    let kalman = (post.x_hat[0] - (mz + czy / cyy * (y - c * mz)))
        .abs()
        .max((post.p[(0, 0)] - (pz - czy * czy / cyy)).abs());

    let sp = ScalarPlant::new(0.7, 1.0, 0.3).map_err(err)?;
    let dt = 0.8;
    let mut rng = seeded_rng(5);
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| exact_scalar_step(0.0, dt, &sp, rng.sample(StandardNormal)).powi(2))
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    let exact = sp.transition_variance(dt);
    check(
        quad <= 1e-8 && semigroup <= 1e-10 && kalman <= 1e-10 && (mean - exact).abs() <= 3.0 * se,
        format!(
            "Q vs quadrature {quad:.1e}, semigroup {semigroup:.1e}, Kalman {kalman:.1e}, \
             OU variance {mean:.4} vs {exact:.4} (SE {se:.1e})"
        ),
    )
}

/// Ad hoc sensor churn moves the error with the number of active sensors.
fn churn() -> Outcome {
    let r = run("adhoc-churn-small")?;
    let plans = &r.plans;
    let always: Vec<usize> = (0..r.report.sensors.len())
        .filter(|&s| plans.iter().all(|p| p.active.contains(&s)))
        .collect();
    let mut lines = Vec::new();
    let mut ok = !always.is_empty();
    for &s in &always {
        let m: Vec<f64> = (0..3).map(|ph| phase_mean(&r, s, ph)).collect();
        ok &= m[1] > m[0] && m[0] > m[2];
        lines.push(format!("sensor {s}: {:.3} / {:.3} / {:.3}", m[0], m[1], m[2]));
    }
    check(ok, format!("phase means {}", lines.join("; ")))
}

fn read_csvs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(err)? {
        let path = entry.map_err(err)?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            out.push((name, fs::read(&path).map_err(err)?));
        }
    }
    out.sort();
    Ok(out)
}

/// Two runs with the same seed write identical CSV artifacts.
fn reproducibility() -> Outcome {
    let mut cfg = builtin("adhoc-churn-small").map_err(err)?;
    cfg.replicates = 40;
    let dirs = [tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?];
    for d in &dirs {
        write_artifacts(&run_scenario(&cfg).map_err(err)?, d.path()).map_err(err)?;
    }
    let a = read_csvs(dirs[0].path())?;
    let b = read_csvs(dirs[1].path())?;
    check(
        !a.is_empty() && a == b,
        format!("{} CSV files compared byte for byte", a.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("stationary gains", gains),
        ("sampling frequencies", frequencies),
        ("scalar estimation bounds", scalar_estimation),
        ("vector estimation bounds", vector_estimation),
        ("finite-horizon and simulated cost", cost_consistency),
        ("degenerate chains", degenerate_cases),
        ("controller bounds", controllers),
        ("plant numerics", plant_numerics),
        ("sensor churn", churn),
        ("reproducible artifacts", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
