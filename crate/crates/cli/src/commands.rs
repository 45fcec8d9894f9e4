//! Subcommands. Each returns a JSON summary; artifacts go through [`OutDir`].

use std::path::Path;

use serde_json::{json, Value};

use polyflow::diagnostics::{
    constraint_report, dissipation_report, distance_report, s_bound_report, smoothing_report, TestBank,
};
use polyflow::kernel::{l1_scaling_check, profile_g, verify_decay};
use polyflow::norms::full_report;
use polyflow::snapshot::read_any;
use polyflow::solver::{ball_check, contraction_probe, imex_solve, picard_solve};
use polyflow::{Field, Trajectory};

use crate::config::{FieldError, InitialData, RunConfig};
use crate::output::OutDir;
use crate::CliError;

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e)
}

pub fn initial_field(cfg: &RunConfig) -> Result<Field, CliError> {
    let spec = cfg.grid_spec()?;
    match &cfg.initial {
        InitialData::Bank(name) => {
            let bank = TestBank::standard(&spec, cfg.flow.seed)?;
            Ok(bank
                .get(name)
                .expect("bank entry checked during validation")
                .field
                .clone())
        }
        InitialData::Snapshot(path) => {
            let traj = load_snapshot(path)?;
            let f = traj.fields()[0].clone();
            if *f.spec() != spec {
                return Err(CliError::Config(vec![FieldError {
                    field: "initial.snapshot".into(),
                    message: format!("snapshot grid {:?} differs from the configured {:?}", f.spec(), spec),
                }]));
            }
            Ok(f.with_time(0.0))
        }
    }
}

pub fn load_snapshot(path: &Path) -> Result<Trajectory, CliError> {
    let bytes = std::fs::read(path).map_err(io)?;
    Ok(read_any(&bytes)?)
}

fn energy_rows(traj: &Trajectory, energy: &[f64], cfg: &RunConfig) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rows = Vec::with_capacity(traj.len());
    for (f, e) in traj.fields().iter().zip(energy) {
        let (d, _) = cfg.target.dist_to_n(f)?;
        rows.push(vec![f.time(), *e, d]);
    }
    Ok(rows)
}

pub fn kernel(cfg: &RunConfig, out: &mut OutDir) -> Result<Value, CliError> {
    let k = &cfg.kernel;
    let n = cfg.grid.dim;
    let count = (k.x_max / k.dx).round() as usize;
    let xs: Vec<f64> = (0..=count).map(|i| i as f64 * k.dx).collect();
    let mut decay_rows = Vec::new();
    let mut l1_rows = Vec::new();
    let mut fits = Vec::new();
    let mut scalings = Vec::new();
    for &m in &k.orders {
        let profile = profile_g(m, n, &xs)?;
        let header: Vec<String> = std::iter::once("x".to_string())
            .chain((0..=m).map(|d| format!("d{d}g")))
            .collect();
        let rows: Vec<Vec<f64>> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| std::iter::once(x).chain(profile.derivatives.iter().map(|d| d[i])).collect())
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.csv(&format!("kernel_profile_m{m}.csv"), &header, &rows).map_err(io)?;
        for order in 0..=m {
            let fit = verify_decay(&profile, order, k.decay_exponent)?;
            decay_rows.push(vec![
                m as f64,
                order as f64,
                fit.exponent,
                fit.c_fit,
                fit.c_fit_half_range,
                fit.sample_range,
                fit.growth,
            ]);
            fits.push(json!({ "m": m, "fit": fit }));
            let l1 = l1_scaling_check(m, order, n, &k.l1_times)?;
            for (t, v) in l1.ts.iter().zip(&l1.values) {
                l1_rows.push(vec![m as f64, order as f64, *t, *v]);
            }
            scalings.push(l1);
        }
    }
    out.csv(
        "kernel_decay.csv",
        &["m", "k", "exponent", "c_fit", "c_fit_half_range", "sample_range", "growth"],
        &decay_rows,
    )
    .map_err(io)?;
    out.csv("kernel_l1.csv", &["m", "k", "t", "value"], &l1_rows).map_err(io)?;
    Ok(json!({ "decay": fits, "l1_scaling": scalings }))
}

pub fn evolve(cfg: &RunConfig, out: &mut OutDir) -> Result<Value, CliError> {
    let u0 = initial_field(cfg)?;
    let traj = imex_solve(&u0, &cfg.flow, &cfg.target)?;
    let diss = dissipation_report(&traj, cfg.flow.m)?;
    let rows = energy_rows(&traj, &diss.energy, cfg)?;
    let drift = rows.iter().map(|r| r[2]).fold(0.0, f64::max);
    out.trajectory("evolve.ptrj", &traj).map_err(io)?;
    out.csv("evolve_energy.csv", &["t", "energy", "dist_to_sphere"], &rows).map_err(io)?;
    Ok(json!({
        "scheme": format!("etd{}", cfg.flow.imex_order),
        "samples": traj.len(),
        "final_time": traj.final_time(),
        "energy_initial": diss.energy[0],
        "energy_final": diss.energy[diss.energy.len() - 1],
        "max_uphill": diss.max_uphill,
        "constraint_drift": drift,
    }))
}

pub fn picard(cfg: &RunConfig, out: &mut OutDir) -> Result<Value, CliError> {
    let u0 = initial_field(cfg)?;
    let (traj, diag) = picard_solve(&u0, &cfg.flow, &cfg.target)?;
    out.trajectory("picard.ptrj", &traj).map_err(io)?;
    let iterates: Vec<Vec<f64>> = diag
        .iterate_distances
        .iter()
        .enumerate()
        .map(|(j, d)| vec![(j + 1) as f64, *d])
        .collect();
    out.csv("picard_iterates.csv", &["iteration", "x_distance"], &iterates).map_err(io)?;
    let rows = energy_rows(&traj, &diag.energy_trace, cfg)?;
    out.csv("picard_energy.csv", &["t", "energy", "dist_to_sphere"], &rows).map_err(io)?;
    out.json("picard_diagnostics.json", &diag).map_err(io)?;
    Ok(serde_json::to_value(&diag).expect("diagnostics serialize"))
}

pub fn norms(cfg: &RunConfig, input: &Path, out: &mut OutDir) -> Result<Value, CliError> {
    let traj = load_snapshot(input)?;
    let cyl = cfg.flow.cylinders(traj.spec())?;
    let report = full_report(&traj, cfg.flow.m, &cyl)?;
    out.json("norms.json", &report).map_err(io)?;
    Ok(json!({
        "samples": traj.len(),
        "seminorm": report.seminorm(),
        "x_norm": report.x_norm(),
        "report": report,
    }))
}

pub fn probe(cfg: &RunConfig, out: &mut OutDir) -> Result<Value, CliError> {
    let u0 = initial_field(cfg)?;
    let pr = contraction_probe(&u0, &cfg.flow, &cfg.target, cfg.probe.pairs)?;
    let ball = ball_check(&u0, &cfg.flow, &cfg.target, cfg.probe.ball_samples)?;
    let pairs: Vec<Vec<f64>> = pr.distances.iter().zip(&pr.ratios).map(|(d, r)| vec![*d, *r]).collect();
    out.csv("probe_pairs.csv", &["x_distance", "ratio"], &pairs).map_err(io)?;
    let samples: Vec<Vec<f64>> = ball
        .samples
        .iter()
        .map(|s| vec![s.offset, s.seminorm, s.image_distance])
        .collect();
    out.csv("probe_ball.csv", &["offset", "seminorm", "image_distance"], &samples).map_err(io)?;
    Ok(json!({ "contraction": pr, "ball": ball }))
}

/// Every report of the diagnostics suite on the configured grid and bank.
pub fn verify(cfg: &RunConfig, out: &mut OutDir) -> Result<Value, CliError> {
    let spec = cfg.grid_spec()?;
    let m = cfg.flow.m;
    let cyl = cfg.flow.cylinders(&spec)?;
    let bank = TestBank::standard(&spec, cfg.flow.seed)?;
    let entries: Vec<_> = if cfg.verify.bank.is_empty() {
        bank.entries.iter().collect()
    } else {
        cfg.verify.bank.iter().filter_map(|n| bank.get(n)).collect()
    };

    let mut smoothing = Vec::new();
    let mut distance = Vec::new();
    let (mut smooth_rows, mut dist_rows) = (Vec::new(), Vec::new());
    for (i, e) in entries.iter().enumerate() {
        let s = smoothing_report(&e.field, m, &cyl)?;
        let d = distance_report(&e.field, m, &cyl, &cfg.target)?;
        smooth_rows.push(vec![i as f64, s.bmo, s.c_cylinder, s.c_sup, s.c_lp.iter().cloned().fold(0.0, f64::max)]);
        dist_rows.push(vec![i as f64, d.bmo, d.max_dist, d.floor, d.k_hat]);
        smoothing.push(json!({ "entry": e.name, "report": s }));
        distance.push(json!({
            "entry": e.name,
            "bmo": d.bmo,
            "max_dist": d.max_dist,
            "floor": d.floor,
            "k_hat": d.k_hat,
        }));
    }
    out.csv("verify_smoothing.csv", &["entry", "bmo", "c_cylinder", "c_sup", "c_lp_max"], &smooth_rows)
        .map_err(io)?;
    out.csv("verify_distance.csv", &["entry", "bmo", "max_dist", "floor", "k_hat"], &dist_rows)
        .map_err(io)?;

    let mut s_bounds = Vec::new();
    let mut s_rows = Vec::new();
    for k in 0..m {
        let r = s_bound_report(&spec, k, &cfg.flow, cfg.verify.s_samples, cfg.verify.base_points)?;
        s_rows.push(vec![k as f64, r.max_ratio, r.mode_error]);
        s_bounds.push(r);
    }
    out.csv("verify_s_bound.csv", &["k", "max_ratio", "mode_error"], &s_rows).map_err(io)?;

    let u0 = initial_field(cfg)?;
    let (traj, diag) = picard_solve(&u0, &cfg.flow, &cfg.target)?;
    let constraint = constraint_report(&traj, &cfg.target, m)?;
    let c_rows: Vec<Vec<f64>> = (0..constraint.times.len())
        .map(|i| {
            vec![
                constraint.times[i],
                constraint.rho[i],
                constraint.dissipation[i],
                constraint.orthogonality[i],
            ]
        })
        .collect();
    out.csv("verify_constraint.csv", &["t", "rho", "dissipation", "orthogonality"], &c_rows)
        .map_err(io)?;
    let diss = dissipation_report(&traj, m)?;
    let e_rows = energy_rows(&traj, &diss.energy, cfg)?;
    out.csv("verify_energy.csv", &["t", "energy", "dist_to_sphere"], &e_rows).map_err(io)?;

    let probe = contraction_probe(&u0, &cfg.flow, &cfg.target, cfg.probe.pairs)?;

    let names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
    let doc = json!({
        "bank": names,
        "smoothing": smoothing,
        "distance": distance,
        "s_bound": s_bounds,
        "picard": diag,
        "constraint": {
            "residual": constraint.residual,
            "orthogonality_normalized": constraint.orthogonality_normalized,
            "exit_index": constraint.exit_index,
        },
        "dissipation": { "max_uphill": diss.max_uphill },
        "contraction": { "theta_hat": probe.theta_hat, "ratios": probe.ratios },
    });
    out.json("verify.json", &doc).map_err(io)?;
    Ok(doc)
}
