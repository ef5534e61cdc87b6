//! Run artifact emission and re-ingestion: density fields as CSV and PGM,
//! per-step history, key=value summaries, and multi-trial statistics.
//!
//! Formats are pinned:
//! - `density.csv`: ny rows x nx columns, top row first, 6 decimal places,
//!   masked cells written as -1.
//! - `density.pgm`: binary P5, 8-bit, pixel = round(255 * (1 - xbar))
//!   computed from the CSV-rounded values, so solid is black; masked cells
//!   are white.
//! - `history.csv`: header `step,J_m,mu_m,var_m,eta,move,dx_ag_l2,recal,damp`.
//! - `summary.txt`: key=value lines with the full config echo.

use crate::config::Hyperparams;
use crate::error::{Error, Result};
use crate::estimator::{evaluate_design, DesignEvaluation};
use crate::fem::Mesh;
use crate::loads::RtoWeights;
use crate::optimizer::{run, Mode, RunRecord, StepRow};
use crate::problems::BuiltProblem;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// Rounds to the 6 decimals the CSV carries.
fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Serializes the physical density field; masked grid cells become -1.
pub fn density_csv(mesh: &Mesh, x_bar: &[f64]) -> String {
    assert_eq!(x_bar.len(), mesh.n_elements());
    let mut out = String::new();
    for row in 0..mesh.ny {
        let iy = mesh.ny - 1 - row;
        for ex in 0..mesh.nx {
            if ex > 0 {
                out.push(',');
            }
            match mesh.element_at(ex, iy) {
                Some(e) => {
                    let _ = write!(out, "{:.6}", x_bar[e]);
                }
                None => out.push_str("-1"),
            }
        }
        out.push('\n');
    }
    out
}

/// Serializes the density as a binary P5 image quantized exactly from the
/// CSV values (solid = black, masked = white).
pub fn density_pgm(mesh: &Mesh, x_bar: &[f64]) -> Vec<u8> {
    assert_eq!(x_bar.len(), mesh.n_elements());
    let mut out = format!("P5\n{} {}\n255\n", mesh.nx, mesh.ny).into_bytes();
    for row in 0..mesh.ny {
        let iy = mesh.ny - 1 - row;
        for ex in 0..mesh.nx {
            let px = match mesh.element_at(ex, iy) {
                Some(e) => {
                    let v = round6(x_bar[e]).clamp(0.0, 1.0);
                    (255.0 * (1.0 - v)).round() as u8
                }
                None => 255,
            };
            out.push(px);
        }
    }
    out
}

/// Parses a density CSV back into a physical density field, validating the
/// shape and the mask against the mesh.
pub fn parse_density_csv(mesh: &Mesh, text: &str) -> Result<Vec<f64>> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != mesh.ny {
        return Err(Error::Shape(format!(
            "density file has {} rows, mesh expects {}",
            rows.len(),
            mesh.ny
        )));
    }
    let mut x_bar = vec![0.0; mesh.n_elements()];
    for (r, line) in rows.iter().enumerate() {
        let iy = mesh.ny - 1 - r;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != mesh.nx {
            return Err(Error::Shape(format!(
                "density row {} has {} columns, mesh expects {}",
                r + 1,
                cells.len(),
                mesh.nx
            )));
        }
        for (ex, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Shape(format!("bad density value {cell:?} at row {}", r + 1))
            })?;
            match mesh.element_at(ex, iy) {
                Some(e) => {
                    if v < 0.0 {
                        return Err(Error::Shape(format!(
                            "masked marker at active cell ({ex}, {iy})"
                        )));
                    }
                    x_bar[e] = v;
                }
                None => {
                    if v >= 0.0 {
                        return Err(Error::Shape(format!(
                            "active value at masked cell ({ex}, {iy})"
                        )));
                    }
                }
            }
        }
    }
    Ok(x_bar)
}

/// Serializes the per-step history.
pub fn history_csv(history: &[StepRow]) -> String {
    let mut out = String::from("step,J_m,mu_m,var_m,eta,move,dx_ag_l2,recal,damp\n");
    for row in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.step,
            row.objective,
            row.mean,
            row.variance,
            row.eta,
            row.move_limit,
            row.delta_ag_l2,
            row.recalibrated as u8,
            row.damped as u8,
        );
    }
    out
}

/// Full configuration echo: every setting that shapes the trajectory.
pub fn config_echo(
    built: &BuiltProblem,
    hyper: &Hyperparams,
    kappa: f64,
    mode: Mode,
    seed: u64,
) -> Vec<(String, String)> {
    let spec = &built.spec;
    let solver = &built.fem.solver;
    let mut echo: Vec<(String, String)> = vec![
        ("problem".into(), spec.name.clone()),
        ("preset".into(), spec.preset.name().into()),
        ("mode".into(), mode.name().into()),
        ("kappa".into(), format!("{kappa}")),
        ("seed".into(), format!("{seed}")),
        (
            "solver".into(),
            match solver.kind {
                crate::fem::SolverKind::Direct => "direct".into(),
                crate::fem::SolverKind::Cg => "cg".into(),
            },
        ),
        ("solver_tol".into(), format!("{}", solver.tol)),
        ("vf".into(), format!("{}", built.vf)),
        ("nu".into(), format!("{}", spec.nu)),
        ("e0".into(), format!("{}", built.material.e0)),
        ("e_min".into(), format!("{}", built.material.e_min)),
        ("penal".into(), format!("{}", built.material.penal)),
        ("r_start".into(), format!("{}", built.schedule.r_start)),
        ("r_end".into(), format!("{}", built.schedule.r_end)),
        (
            "r_start_step".into(),
            format!("{}", built.schedule.start_step),
        ),
        ("r_interval".into(), format!("{}", built.schedule.interval)),
        (
            "r_decrements".into(),
            format!("{}", built.schedule.decrements),
        ),
        ("symmetry".into(), format!("{}", built.symmetry.is_some())),
    ];
    echo.extend(hyper.echo());
    echo
}

/// Serializes the run summary.
pub fn summary_text(
    record: &RunRecord,
    built: &BuiltProblem,
    hyper: &Hyperparams,
    kappa: f64,
    mode: Mode,
    seed: u64,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "J_hat={}", record.eval.objective);
    let _ = writeln!(out, "mu_hat={}", record.eval.mean);
    let _ = writeln!(out, "sigma_hat={}", record.eval.sigma);
    let _ = writeln!(out, "N_step={}", record.n_step);
    let _ = writeln!(out, "N_solve={}", record.n_solve);
    let _ = writeln!(out, "wall_s={:.3}", record.wall_seconds);
    let _ = writeln!(out, "N_recal={}", record.n_recal);
    let _ = writeln!(out, "terminated_early={}", record.terminated_early);
    let _ = writeln!(out, "final_move={}", record.final_move);
    let _ = writeln!(out, "final_radius={}", record.final_radius);
    for (k, v) in config_echo(built, hyper, kappa, mode, seed) {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

/// Writes density.csv, density.pgm, history.csv, and summary.txt.
pub fn emit_run_artifacts(
    dir: &Path,
    record: &RunRecord,
    built: &BuiltProblem,
    hyper: &Hyperparams,
    kappa: f64,
    mode: Mode,
    seed: u64,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("density.csv"),
        density_csv(&built.fem.mesh, &record.design_physical),
    )?;
    let mut pgm = fs::File::create(dir.join("density.pgm"))?;
    pgm.write_all(&density_pgm(&built.fem.mesh, &record.design_physical))?;
    fs::write(dir.join("history.csv"), history_csv(&record.history))?;
    fs::write(
        dir.join("summary.txt"),
        summary_text(record, built, hyper, kappa, mode, seed),
    )?;
    Ok(())
}

/// One trial's reported metrics.
#[derive(Debug, Clone)]
pub struct TrialRow {
    pub seed: u64,
    pub objective: f64,
    pub mean: f64,
    pub sigma: f64,
    pub n_step: u32,
    pub n_solve: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrialStats {
    pub rows: Vec<TrialRow>,
    pub failures: Vec<(u64, String)>,
    pub representative_seed: u64,
}

fn mean_of(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = vals.clone().count();
    vals.sum::<f64>() / n as f64
}

fn std_of(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = vals.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mu = mean_of(vals.clone());
    (vals.map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
}

impl TrialStats {
    /// Representative trial: objective closest to the mean objective, ties
    /// broken by the lowest seed.
    pub fn select_representative(rows: &[TrialRow]) -> u64 {
        let mu = mean_of(rows.iter().map(|r| r.objective));
        let mut best = &rows[0];
        for r in rows {
            let d = (r.objective - mu).abs();
            let bd = (best.objective - mu).abs();
            if d < bd || (d == bd && r.seed < best.seed) {
                best = r;
            }
        }
        best.seed
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("seed,J_hat,mu_hat,sigma_hat,N_step,N_solve,wall_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                r.seed, r.objective, r.mean, r.sigma, r.n_step, r.n_solve, r.wall_seconds
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let agg = |name: &str, f: &dyn Fn(&TrialRow) -> f64, out: &mut String| {
            let vals = self.rows.iter().map(f);
            let mn = vals.clone().fold(f64::INFINITY, f64::min);
            let mx = vals.clone().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(
                out,
                "{name}_mean={}\n{name}_min={mn}\n{name}_max={mx}\n{name}_std={}",
                mean_of(vals.clone()),
                std_of(vals)
            );
        };
        let _ = writeln!(out, "trials={}", self.rows.len());
        let _ = writeln!(out, "failures={}", self.failures.len());
        agg("J_hat", &|r| r.objective, &mut out);
        agg("mu_hat", &|r| r.mean, &mut out);
        agg("sigma_hat", &|r| r.sigma, &mut out);
        agg("N_step", &|r| r.n_step as f64, &mut out);
        agg("N_solve", &|r| r.n_solve as f64, &mut out);
        agg("wall_s", &|r| r.wall_seconds, &mut out);
        let _ = writeln!(out, "representative_seed={}", self.representative_seed);
        out
    }
}

/// Runs `n_trials` independent trials with seeds base..base+n-1 in
/// parallel, writes per-trial artifact directories under `out_dir` (when
/// given), and aggregates statistics. Failed trials are recorded and
/// aggregation proceeds over the successes.
pub fn run_trials(
    built: &BuiltProblem,
    hyper: &Hyperparams,
    kappa: f64,
    mode: Mode,
    base_seed: u64,
    n_trials: u64,
    out_dir: Option<&Path>,
) -> Result<TrialStats> {
    if n_trials == 0 {
        return Err(Error::Parameter("need at least one trial".into()));
    }
    let results: Vec<(u64, Result<RunRecord>)> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i;
            (seed, run(built, hyper, kappa, mode, seed))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (seed, res) in results {
        match res {
            Ok(record) => {
                if let Some(dir) = out_dir {
                    emit_run_artifacts(
                        &dir.join(format!("trial_{seed}")),
                        &record,
                        built,
                        hyper,
                        kappa,
                        mode,
                        seed,
                    )?;
                }
                rows.push(TrialRow {
                    seed,
                    objective: record.eval.objective,
                    mean: record.eval.mean,
                    sigma: record.eval.sigma,
                    n_step: record.n_step,
                    n_solve: record.n_solve,
                    wall_seconds: record.wall_seconds,
                });
            }
            Err(e) => {
                log::warn!("trial with seed {seed} failed: {e}");
                failures.push((seed, e.to_string()));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Numerical("every trial failed".into()));
    }
    let representative_seed = TrialStats::select_representative(&rows);
    let stats = TrialStats {
        rows,
        failures,
        representative_seed,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trials.csv"), stats.csv())?;
        fs::write(dir.join("trials_summary.txt"), stats.summary())?;
    }
    Ok(stats)
}

/// Re-evaluates a stored density field under a problem's load model.
pub fn evaluate_density_file(
    built: &BuiltProblem,
    kappa: f64,
    csv_text: &str,
    m_eval: usize,
    seed: u64,
) -> Result<crate::estimator::EvalSummary> {
    let x_bar = parse_density_csv(&built.fem.mesh, csv_text)?;
    if let Some(&bad) = x_bar.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Shape(format!(
            "density value {bad} outside [0, 1]"
        )));
    }
    let weights = RtoWeights::new(
        kappa,
        &built.model,
        &built.fem.mesh,
        &built.fem.bc,
        built.material.e0,
    )?;
    let eval = DesignEvaluation::from_physical(&built.fem, built.material, x_bar)?;
    evaluate_design(&eval, &built.model, &weights, m_eval, seed)
}
