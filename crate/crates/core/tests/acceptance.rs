//! Acceptance suite: one `[PASS]` / `[FAIL]` line per criterion.
//!
//! Exits 0 after reporting unless `POLYFLOW_STRICT_ACCEPTANCE` is set, in
//! which case any failing criterion makes the process exit 1.

use std::f64::consts::{E, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use polyflow::diagnostics::{
    constraint_report, distance_report, equator_wrap, log_oscillation, smoothing_report,
    tangency_residual, BankKind, TestBank,
};
use polyflow::grid::uniform_times;
use polyflow::kernel::{gaussian_profile, l1_scaling_check, profile_g, verify_decay};
use polyflow::nonlinearity::{f_gastel_m1, f_tilde, gradient_tensor};
use polyflow::norms::{
    bmo_brute_force, bmo_seminorm, cylinder_brute_force, cylinder_sup, x_norm, CylinderSet,
};
use polyflow::semigroup::{apply_g, apply_s, g_trajectory, DuhamelScheme};
use polyflow::solver::{
    ball_check, contraction_probe, imex_solve, log_log_slope, picard_solve, FlowParams,
};
use polyflow::target::TargetManifold;
use polyflow::{Field, GridSpec, Trajectory};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

const BOX: f64 = 2.0 * PI * 8.0;

fn spec(points: usize) -> GridSpec {
    GridSpec::new(1, BOX, points).expect("valid grid")
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::MIN, f64::max);
    let lo = values.iter().cloned().fold(f64::MAX, f64::min);
    hi / lo - 1.0
}

fn ac1() -> Outcome {
    let xs: Vec<f64> = (0..=400).map(|i| -10.0 + 0.05 * i as f64).collect();
    let p = profile_g(1, 1, &xs)?;
    let profile_err = xs
        .iter()
        .zip(p.values())
        .map(|(x, g)| (g - gaussian_profile(1, x.abs())).abs())
        .fold(0.0, f64::max);
    let s = spec(64);
    let mut mode_err: f64 = 0.0;
    for j in [1, 3, 7] {
        let q = s.fundamental() * j as f64;
        let u0 = Field::from_fn(s, 1, 0.0, |x, o| o[0] = (q * x[0]).cos())?;
        for t in [0.01, 0.1, 1.0] {
            let g = apply_g(&u0, 1, t)?;
            let decay = (-t * q * q).exp();
            for (i, v) in g.data().iter().enumerate() {
                mode_err = mode_err.max((v - decay * (q * s.position(i)[0]).cos()).abs());
            }
        }
    }
    Ok((
        profile_err <= 1e-10 && mode_err <= 1e-12,
        format!("profile err {profile_err:.2e} (tol 1e-10), single-mode err {mode_err:.2e} (tol 1e-12)"),
    ))
}

fn ac2() -> Outcome {
    let xs: Vec<f64> = (0..=800).map(|i| 0.025 * i as f64).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [2, 3] {
        let p = profile_g(m, 1, &xs)?;
        for k in 0..=2 {
            let fit = verify_decay(&p, k, 5.0)?;
            ok &= fit.stable;
            parts.push(format!("m={m} k={k} growth {:.3}", fit.growth));
        }
    }
    Ok((ok, format!("C_fit(|x|<=20)/C_fit(|x|<=10) - 1 (tol 0.1): {}", parts.join(", "))))
}

fn ac3() -> Outcome {
    let ts = [0.1, 0.3, 1.0, 3.0];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut reference = f64::NAN;
    let cases: &[(usize, usize, usize)] = &[(1, 1, 1), (1, 2, 1), (2, 1, 1), (2, 2, 1), (3, 1, 1), (3, 3, 1), (1, 1, 2)];
    for &(m, k, n) in cases {
        let r = l1_scaling_check(m, k, n, &ts)?;
        ok &= r.max_relative_deviation <= 1e-3;
        worst = worst.max(r.max_relative_deviation);
        if (m, k, n) == (1, 1, 1) {
            reference = r.mean;
        }
    }
    let exact = 2.0 / (4.0 * PI).sqrt();
    let ref_err = (reference - exact).abs();
    ok &= ref_err <= 1e-6;
    Ok((
        ok,
        format!("max relative spread {worst:.2e} over {} (m,k,n) cases (tol 1e-3); m=k=n=1 value {reference:.8} vs {exact:.8} (err {ref_err:.1e}, tol 1e-6)", cases.len()),
    ))
}

fn ac4() -> Outcome {
    let s = spec(32);
    let t_final = 0.5;
    let times = uniform_times(t_final, 256);
    let mut worst: f64 = 0.0;
    for m in [1, 2, 3] {
        let q = s.fundamental();
        let lam = q.powi(2 * m as i32);
        let mode = Field::from_fn(s, 1, 0.0, |x, o| o[0] = (q * x[0]).cos())?;
        let constant = Trajectory::new(times.clone(), vec![mode.clone(); times.len()])?;
        let resonant = Trajectory::try_from_fn(times.clone(), |_, t| Ok(mode.scaled((-t * lam).exp())))?;
        for order in [1, 2] {
            let scheme = DuhamelScheme::new(order, t_final / 256.0)?;
            let sc = apply_s(&constant, m, &scheme)?;
            for (i, &t) in times.iter().enumerate() {
                let exact = mode.scaled(-(-t * lam).exp_m1() / lam);
                worst = worst.max(sc.fields()[i].sub(&exact)?.sup_norm());
            }
            if order == 2 {
                let sr = apply_s(&resonant, m, &scheme)?;
                for (i, &t) in times.iter().enumerate() {
                    let exact = mode.scaled(t * (-t * lam).exp());
                    worst = worst.max(sr.fields()[i].sub(&exact)?.sup_norm());
                }
            }
        }
    }
    Ok((worst <= 1e-10, format!("max sup error {worst:.2e} over m=1..3 (tol 1e-10, dt = T/256, lowest mode, T = 0.5)")))
}

fn ac5() -> Outcome {
    let s = spec(64);
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1, 2, 3] {
        let q = s.fundamental() * 4.0;
        let t_star_max = 1.0 / (2.0 * q.powi(2 * m as i32)) * m as f64;
        let u0 = Field::from_fn(s, 3, 0.0, |x, o| {
            o[0] = (q * x[0]).cos();
            o[1] = 0.0;
            o[2] = 0.0;
        })?;
        let traj = g_trajectory(&u0, m, &uniform_times(4.0 * t_star_max, 800))?;
        let cyl = CylinderSet::with_default_stride(&s, BOX / 4.0)?;
        let r = x_norm(&traj, m, &cyl)?;
        for k in 1..=m {
            let e = k as f64 / (2 * m) as f64;
            let exact = (k as f64 / (2.0 * m as f64 * E)).powf(e);
            let err = rel(r.x_sup_parts[k - 1], exact);
            ok &= err <= 0.02;
            parts.push(format!("m={m} k={k} {:.5}/{exact:.5}", r.x_sup_parts[k - 1]));
        }
    }
    Ok((ok, format!("computed/closed form (tol 2%): {}", parts.join(", "))))
}

fn ac6() -> Outcome {
    let tm = TargetManifold::default();
    let s = spec(64);
    let mut wrap_err: f64 = 0.0;
    for j in [1, 2, 3] {
        let u = equator_wrap(&s, j)?;
        let q = s.fundamental() * j as f64;
        let f = f_tilde(&u, &tm, 1)?;
        wrap_err = wrap_err.max(f.sub(&u.scaled(q * q))?.sup_norm());
    }
    let bank = TestBank::standard(&spec(128), 0)?;
    let mut gastel_err: f64 = 0.0;
    for e in &bank.entries {
        let a = f_tilde(&e.field, &tm, 1)?;
        let b = f_gastel_m1(&e.field, &tm, 1)?;
        gastel_err = gastel_err.max(a.sub(&b)?.sup_norm());
    }
    let u0 = equator_wrap(&s, 2)?;
    let p = FlowParams { m: 1, t_final: 0.5, steps: 64, ..Default::default() };
    let (u, _) = picard_solve(&u0, &p, &tm)?;
    let drift = u.fields().iter().map(|f| f.sub(&u0).map(|d| d.sup_norm())).collect::<Result<Vec<_>, _>>()?;
    let drift = drift.into_iter().fold(0.0, f64::max);
    Ok((
        wrap_err <= 1e-8 && gastel_err <= 1e-8 && drift <= 1e-8,
        format!("F~(wrap) - q^2 u: {wrap_err:.1e}; trace form vs F~ on {} bank maps: {gastel_err:.1e}; wrap drift over T=0.5: {drift:.1e} (tol 1e-8 each)", bank.entries.len()),
    ))
}

fn ac7() -> Outcome {
    let tm = TargetManifold::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1, 2] {
        let coarse = TestBank::standard(&spec(32), 0)?;
        let fine = TestBank::standard(&spec(64), 0)?;
        for (a, b) in coarse.entries.iter().zip(&fine.entries) {
            if !matches!(a.kind, BankKind::BumpRotation | BankKind::LogOscillation) {
                continue;
            }
            let r32 = tangency_residual(&a.field, m, &tm)?;
            let r64 = tangency_residual(&b.field, m, &tm)?;
            let gain = r32 / r64;
            ok &= gain >= 4.0;
            parts.push(format!("m={m} {}: {gain:.1}x", a.name));
        }
    }
    Ok((ok, format!("residual reduction 32->64 (need >= 4x): {}", parts.join(", "))))
}

fn ac8() -> Outcome {
    let tm = TargetManifold::default();
    let s = spec(64);
    let u0 = log_oscillation(&s, 0.05)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1, 2] {
        let p = FlowParams { m, t_final: 0.5, steps: 64, ball_radius: 0.05, ..Default::default() };
        let probe = contraction_probe(&u0, &p, &tm, 10)?;
        let (_, d) = picard_solve(&u0, &p, &tm)?;
        let ratios: Vec<f64> = d.iterate_distances.windows(2).skip(1).map(|w| w[1] / w[0]).collect();
        let worst = ratios.iter().cloned().fold(0.0, f64::max);
        ok &= probe.theta_hat < 1.0 && worst <= probe.theta_hat + 0.1;
        parts.push(format!("m={m} theta_hat {:.4}, worst Picard ratio {worst:.4} over {} iterations", probe.theta_hat, d.iterations));
    }
    Ok((ok, parts.join("; ")))
}

fn ac9() -> Outcome {
    let tm = TargetManifold::default();
    let s = spec(64);
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1, 2] {
        let p = FlowParams { m, t_final: 0.5, steps: 64, ball_radius: 0.05, ..Default::default() };
        let ball = ball_check(&log_oscillation(&s, 0.05)?, &p, &tm, 8)?;
        let mut pts = Vec::new();
        for eps in [0.01, 0.02, 0.04] {
            let c = ball_check(&log_oscillation(&s, eps)?, &p, &tm, 0)?;
            pts.push((c.samples[0].seminorm, c.samples[0].image_distance));
        }
        let slope = log_log_slope(&pts)?;
        let target = (m + 1) as f64 / m as f64;
        ok &= ball.inside && (slope - target).abs() <= 0.3;
        parts.push(format!(
            "m={m} worst margin {:.4} ({}), exponent {slope:.3} vs {target:.3} +- 0.3",
            ball.worst_margin,
            if ball.inside { "inside" } else { "outside" }
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn ac10() -> Outcome {
    let tm = TargetManifold::default();
    let s = spec(64);
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1, 2] {
        for eps in [0.05, 0.1] {
            let u0 = log_oscillation(&s, eps)?;
            let mut diffs = Vec::new();
            for steps in [256, 512] {
                let p = FlowParams { m, t_final: 0.25, steps, ..Default::default() };
                let (u, _) = picard_solve(&u0, &p, &tm)?;
                let v = imex_solve(&u0, &p, &tm)?;
                diffs.push(u.last().sub(v.last())?.sup_norm());
            }
            let ratio = diffs[0] / diffs[1];
            ok &= diffs[0] <= 1e-4 && (ratio / 2.0 - 1.0).abs() <= 0.2;
            parts.push(format!("m={m} eps={eps}: {:.2e} -> ratio {ratio:.3}", diffs[0]));
        }
    }
    Ok((ok, format!("|picard - etd1| at T=0.25, M=256 (tol 1e-4) and M-doubling ratio (2 +- 20%): {}", parts.join(", "))))
}

fn ac11() -> Outcome {
    let tm = TargetManifold::default();
    let s = spec(128);
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1, 2] {
        let u0 = log_oscillation(&s, 0.1)?;
        let mut peaks = Vec::new();
        let mut orth: f64 = 0.0;
        for steps in [64, 128] {
            let p = FlowParams { m, t_final: 0.25, steps, ..Default::default() };
            let (u, _) = picard_solve(&u0, &p, &tm)?;
            let c = constraint_report(&u, &tm, m)?;
            peaks.push(c.rho.iter().cloned().fold(0.0, f64::max));
            orth = orth.max(c.orthogonality_normalized);
        }
        ok &= peaks[0] <= 1e-6 && peaks[1] < peaks[0] && orth <= 1e-8;
        parts.push(format!("m={m} max rho {:.2e} -> {:.2e}, orthogonality {orth:.1e}", peaks[0], peaks[1]));
    }
    Ok((ok, format!("(tol rho 1e-6 and decreasing under dt halving, orthogonality 1e-8) {}", parts.join("; "))))
}

fn ac12() -> Outcome {
    let tm = TargetManifold::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1, 2] {
        let mut by_grid = Vec::new();
        for n in [64, 128] {
            let s = spec(n);
            let cyl = CylinderSet::with_default_stride(&s, BOX / 4.0)?;
            let mut rows = Vec::new();
            for eps in [0.01, 0.05, 0.1] {
                let u0 = log_oscillation(&s, eps)?;
                rows.push((smoothing_report(&u0, m, &cyl)?, distance_report(&u0, m, &cyl, &tm)?));
            }
            by_grid.push(rows);
        }
        let (coarse, fine) = (&by_grid[0], &by_grid[1]);
        let refine_c = coarse
            .iter()
            .zip(fine)
            .map(|(a, b)| rel(b.0.c_cylinder, a.0.c_cylinder).max(rel(b.0.c_sup, a.0.c_sup)))
            .fold(0.0, f64::max);
        let refine_k = coarse.iter().zip(fine).map(|(a, b)| rel(b.1.k_hat, a.1.k_hat)).fold(0.0, f64::max);
        let eps_c = spread(&fine.iter().map(|r| r.0.c_cylinder).collect::<Vec<_>>())
            .max(spread(&fine.iter().map(|r| r.0.c_sup).collect::<Vec<_>>()));
        let eps_k = spread(&fine.iter().map(|r| r.1.k_hat).collect::<Vec<_>>());
        ok &= refine_c <= 0.10 && refine_k <= 0.25 && eps_c <= 0.15 && eps_k <= 0.25;
        let mut line = format!(
            "m={m}: C_hat refinement {refine_c:.3} (tol 0.10), eps spread {eps_c:.3} (tol 0.15); K_hat refinement {refine_k:.3} (tol 0.25), eps spread {eps_k:.2} (tol 0.25)"
        );
        let dist_slope = log_log_slope(&fine.iter().map(|r| (r.1.bmo, r.1.max_dist)).collect::<Vec<_>>())?;
        line.push_str(&format!(", max dist ~ bmo^{dist_slope:.2}"));
        for k in 1..m {
            let pts: Vec<(f64, f64)> = fine.iter().map(|r| (r.0.bmo, r.0.lp_lhs[k - 1])).collect();
            let slope = log_log_slope(&pts)?;
            let want = (2 * m) as f64 / k as f64;
            ok &= (slope - want).abs() <= 0.3;
            line.push_str(&format!(", L^(2m/k) side k={k} ~ bmo^{slope:.2} (want {want:.1})"));
        }
        parts.push(line);
    }
    Ok((ok, parts.join("; ")))
}

fn ac13() -> Outcome {
    let s = spec(32);
    let cap = BOX / 4.0;
    let cyl = CylinderSet::with_default_stride(&s, cap)?;
    let bank = TestBank::standard(&s, 0)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for e in &bank.entries {
        if e.kind == BankKind::Constant {
            continue;
        }
        let fast = bmo_seminorm(&e.field, &cyl)?;
        let brute = bmo_brute_force(&e.field, cap)?;
        worst = worst.max(rel(fast, brute));
        let traj = g_trajectory(&e.field, 1, &uniform_times(cap * cap, 64))?;
        let integrand: Vec<Vec<f64>> = traj
            .fields()
            .iter()
            .map(|f| {
                let g = gradient_tensor(&f.to_spectral().expect("finite"), 1).pointwise_norm();
                g.into_iter().map(|v| v * v).collect()
            })
            .collect();
        let fast = cylinder_sup(&integrand, traj.times(), &cyl, 1);
        let brute = cylinder_brute_force(&integrand, traj.times(), &s, cap, 1);
        worst = worst.max(rel(fast, brute));
        count += 2;
    }
    Ok((worst <= 0.05, format!("worst relative gap {worst:.4} over {count} estimator/brute-force pairs (tol 0.05)")))
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("AC1", "kernel exactness at m=1", ac1),
        ("AC2", "kernel decay fits, m in {2,3}", ac2),
        ("AC3", "L1 scaling of kernel derivatives", ac3),
        ("AC4", "Duhamel operator closed forms", ac4),
        ("AC5", "X-norm single-mode closed form", ac5),
        ("AC6", "sphere nonlinearity oracles at m=1", ac6),
        ("AC7", "tangency under refinement", ac7),
        ("AC8", "contraction of the solution map", ac8),
        ("AC9", "ball mapping and superlinearity", ac9),
        ("AC10", "Picard vs exponential integrator", ac10),
        ("AC11", "constraint preservation", ac11),
        ("AC12", "smoothing and distance constants", ac12),
        ("AC13", "norm estimators vs brute force", ac13),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        println!("[{}] {id} {name}: {detail} ({secs:.1}s)", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(id);
        }
    }
    println!("acceptance: {} of 13 passed; failing: {:?}", 13 - failed.len(), failed);
    if !failed.is_empty() && std::env::var_os("POLYFLOW_STRICT_ACCEPTANCE").is_some() {
        std::process::exit(1);
    }
}
