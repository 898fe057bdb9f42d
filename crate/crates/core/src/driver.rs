//! The experiment pipeline behind the CLI.
//!
//! Four stages, each leaving files under the output directory:
//!
//! * `snapshots`: integrate the single-domain benchmark problems and store
//!   the sampled trajectories (`snapshots/*.rpmx`).
//! * `offline`: restrict the snapshots to the two subdomains and compute the
//!   interface and interior mode hierarchies (`offline/*.rpmx`). Modes are
//!   stored at full rank; runs truncate.
//! * `run`: integrate the requested coupled formulations against a freshly
//!   computed benchmark, one CSV per cell plus `runs/summary.csv`.
//! * `report`: fold the summary into a readable table.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fom::{restrict_to_subdomains, run_single_domain, Trajectory};
use crate::io;
use crate::ivr::{run_coupled, Formulation, SimulationResult};
use crate::metrics::{error_series, trace_jump_series, ErrorNorm};
use crate::numerics::svd_thin;
use crate::pod::{gamma_dim_rule, select_dim, CompositeBasis};

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)?;
    Ok(())
}

fn snapshots_dir(out: &Path) -> PathBuf {
    out.join("snapshots")
}

fn offline_dir(out: &Path) -> PathBuf {
    out.join("offline")
}

fn runs_dir(out: &Path) -> PathBuf {
    out.join("runs")
}

#[derive(Debug, Serialize)]
struct SnapshotMeta<'a> {
    label: &'a str,
    config: String,
    nx: usize,
    ny: usize,
    kappa1: f64,
    kappa2: f64,
    dt: f64,
    n_steps: usize,
    n_stored: usize,
}

/// Integrates every snapshot run and stores the trajectories.
pub fn cmd_snapshots(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = snapshots_dir(out);
    ensure_dir(&dir)?;
    for run in cfg.effective_snapshot_runs() {
        let problem = cfg.snapshot_problem(&run);
        let started = Instant::now();
        let traj = run_single_domain(&problem)?;
        let path = dir.join(format!("{}.rpmx", run.label));
        io::write_matrix(&path, &traj.states, Some(&traj.times))?;
        io::write_meta(
            &path,
            &SnapshotMeta {
                label: &run.label,
                config: cfg.hash(),
                nx: problem.nx,
                ny: problem.ny,
                kappa1: problem.fields.kappa_at(0.0),
                kappa2: problem.fields.kappa_at(1.0),
                dt: problem.dt,
                n_steps: problem.n_steps(),
                n_stored: traj.n_stored(),
            },
        )?;
        println!(
            "snapshots: {} -> {} states of dim {} ({} steps, {:.1}s)",
            run.label,
            traj.n_stored(),
            traj.states.nrows(),
            problem.n_steps(),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct OfflineSideMeta {
    n_interior: usize,
    n_gamma: usize,
    n_snapshots: usize,
    d0_energy: usize,
    d_gamma_energy: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct OfflineMeta {
    config: String,
    delta0: f64,
    delta_gamma: f64,
    sides: [OfflineSideMeta; 2],
}

/// Full-rank mode hierarchy of one subdomain, as stored on disk.
pub struct StoredModes {
    pub u_interior: DMatrix<f64>,
    pub sigma_interior: Vec<f64>,
    pub u_gamma: DMatrix<f64>,
    pub sigma_gamma: Vec<f64>,
}

impl StoredModes {
    /// Truncates to an explicit interior dimension, interface modes by the
    /// two-thirds rule.
    pub fn basis_explicit(&self, d0: usize) -> Result<CompositeBasis> {
        if d0 == 0 || d0 > self.u_interior.ncols() {
            return Err(Error::RankExceeded {
                requested: d0,
                available: self.u_interior.ncols(),
            });
        }
        let dg = gamma_dim_rule(d0, self.u_gamma.nrows()).min(self.u_gamma.ncols());
        Ok(self.truncate(d0, dg))
    }

    /// Truncates to the energy-selected dimensions.
    pub fn basis_energy(&self, delta0: f64, delta_gamma: f64) -> CompositeBasis {
        let d0 = select_dim(&self.sigma_interior, delta0).min(self.u_interior.ncols());
        let dg = select_dim(&self.sigma_gamma, delta_gamma).min(self.u_gamma.ncols());
        self.truncate(d0, dg)
    }

    fn truncate(&self, d0: usize, dg: usize) -> CompositeBasis {
        CompositeBasis {
            phi_interior: self.u_interior.columns(0, d0).into_owned(),
            phi_gamma: self.u_gamma.columns(0, dg).into_owned(),
            sigma_interior: self.sigma_interior[..d0].to_vec(),
            sigma_gamma: self.sigma_gamma[..dg].to_vec(),
        }
    }
}

fn side_paths(dir: &Path, side: usize) -> [PathBuf; 4] {
    [
        dir.join(format!("side{side}_interior.rpmx")),
        dir.join(format!("side{side}_sigma_interior.rpmx")),
        dir.join(format!("side{side}_gamma.rpmx")),
        dir.join(format!("side{side}_sigma_gamma.rpmx")),
    ]
}

/// Restricts the stored snapshots and computes both mode hierarchies.
pub fn cmd_offline(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = offline_dir(out);
    ensure_dir(&dir)?;
    let problem = cfg.problem();
    let (s1, s2) = problem.subdomains()?;

    let mut x_d: [Vec<DMatrix<f64>>; 2] = [vec![], vec![]];
    for run in cfg.effective_snapshot_runs() {
        let path = snapshots_dir(out).join(format!("{}.rpmx", run.label));
        let (states, _) = io::read_matrix(&path)?;
        if states.nrows() != (problem.nx + 1) * (problem.ny + 1) {
            return Err(Error::DimensionMismatch(format!(
                "snapshot file {} has {} rows, expected {}",
                path.display(),
                states.nrows(),
                (problem.nx + 1) * (problem.ny + 1)
            )));
        }
        let (set1, set2) = restrict_to_subdomains(&states, &s1, &s2);
        x_d[0].push(set1.x_d);
        x_d[1].push(set2.x_d);
    }

    let mut side_meta = Vec::with_capacity(2);
    for (i, sub) in [&s1, &s2].into_iter().enumerate() {
        let x = hcat(&x_d[i]);
        let x_gamma = x.rows(0, sub.n_gamma).into_owned();
        let x_interior = x.rows(sub.n_gamma, sub.n_interior).into_owned();
        let svd_i = svd_thin(&x_interior)?;
        let svd_g = svd_thin(&x_gamma)?;
        let paths = side_paths(&dir, i + 1);
        io::write_matrix(&paths[0], &svd_i.u, None)?;
        io::write_matrix(&paths[1], &DMatrix::from_column_slice(svd_i.sigma.len(), 1, svd_i.sigma.as_slice()), None)?;
        io::write_matrix(&paths[2], &svd_g.u, None)?;
        io::write_matrix(&paths[3], &DMatrix::from_column_slice(svd_g.sigma.len(), 1, svd_g.sigma.as_slice()), None)?;

        let d0 = select_dim(svd_i.sigma.as_slice(), cfg.delta0).min(svd_i.u.ncols());
        let dg = select_dim(svd_g.sigma.as_slice(), cfg.delta_gamma()).min(svd_g.u.ncols());
        println!(
            "offline: side {} -> {} snapshots, d0 = {} of {}, d_gamma = {} of {}",
            i + 1,
            x.ncols(),
            d0,
            svd_i.u.ncols(),
            dg,
            svd_g.u.ncols()
        );
        side_meta.push(OfflineSideMeta {
            n_interior: sub.n_interior,
            n_gamma: sub.n_gamma,
            n_snapshots: x.ncols(),
            d0_energy: d0,
            d_gamma_energy: dg,
        });
    }

    let meta = OfflineMeta {
        config: cfg.hash(),
        delta0: cfg.delta0,
        delta_gamma: cfg.delta_gamma(),
        sides: [side_meta.remove(0), side_meta.remove(0)],
    };
    let meta_path = dir.join("offline.rpmx");
    io::write_meta(&meta_path, &meta)?;
    Ok(())
}

fn hcat(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Loads one side's stored mode hierarchy.
pub fn load_modes(out: &Path, side: usize) -> Result<StoredModes> {
    let paths = side_paths(&offline_dir(out), side);
    let (u_interior, _) = io::read_matrix(&paths[0])?;
    let (sig_i, _) = io::read_matrix(&paths[1])?;
    let (u_gamma, _) = io::read_matrix(&paths[2])?;
    let (sig_g, _) = io::read_matrix(&paths[3])?;
    Ok(StoredModes {
        u_interior,
        sigma_interior: sig_i.as_slice().to_vec(),
        u_gamma,
        sigma_gamma: sig_g.as_slice().to_vec(),
    })
}

/// One (formulation, dimension) cell of the study.
#[derive(Debug, Clone)]
pub struct Cell {
    pub form: Formulation,
    /// Explicit interior dimension; `None` selects by energy.
    pub d0: Option<usize>,
}

impl Cell {
    pub fn dim_label(&self) -> String {
        match self.d0 {
            Some(d) => format!("d{d}"),
            None => "energy".into(),
        }
    }
}

/// Outcome of one cell, one row of `summary.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub formulation: String,
    pub dim: String,
    pub d0_1: usize,
    pub d_gamma_1: usize,
    pub d0_2: usize,
    pub d_gamma_2: usize,
    pub multiplier_dim: usize,
    pub cond_schur: f64,
    pub schur_spd: bool,
    pub max_eps: f64,
    pub final_eps: f64,
    pub max_residual: f64,
    pub wall_s: f64,
    pub status: String,
}

fn nan_row(form: &Formulation, cell: &Cell, status: String) -> SummaryRow {
    SummaryRow {
        formulation: form.to_string(),
        dim: cell.dim_label(),
        d0_1: 0,
        d_gamma_1: 0,
        d0_2: 0,
        d_gamma_2: 0,
        multiplier_dim: 0,
        cond_schur: f64::NAN,
        schur_spd: false,
        max_eps: f64::NAN,
        final_eps: f64::NAN,
        max_residual: f64::NAN,
        wall_s: 0.0,
        status,
    }
}

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    problem: crate::problem::ProblemConfig,
    s1: crate::mesh::Subdomain,
    s2: crate::mesh::Subdomain,
    norm: ErrorNorm,
    bench: Trajectory,
    modes: [Option<StoredModes>; 2],
    out: PathBuf,
}

fn run_cell(ctx: &RunContext<'_>, cell: &Cell) -> SummaryRow {
    let started = Instant::now();
    let mut bases: [Option<CompositeBasis>; 2] = [None, None];
    for side in 0..2 {
        if !cell.form.tag.reduced_side(side) {
            continue;
        }
        let modes = match &ctx.modes[side] {
            Some(m) => m,
            None => {
                return nan_row(
                    &cell.form,
                    cell,
                    format!("no offline modes for side {}", side + 1),
                )
            }
        };
        let basis = match cell.d0 {
            Some(d0) => match modes.basis_explicit(d0) {
                Ok(b) => b,
                Err(e) => return nan_row(&cell.form, cell, e.to_string()),
            },
            None => modes.basis_energy(ctx.cfg.delta0, ctx.cfg.delta_gamma()),
        };
        bases[side] = Some(basis);
    }

    let res = run_coupled(
        &ctx.problem,
        cell.form,
        [bases[0].as_ref(), bases[1].as_ref()],
    );
    let res = match res {
        Ok(r) => r,
        Err(e) => return nan_row(&cell.form, cell, e.to_string()),
    };
    let eps = match error_series(&res, &ctx.bench, &ctx.s1, &ctx.s2, &ctx.norm) {
        Ok(e) => e,
        Err(e) => return nan_row(&cell.form, cell, e.to_string()),
    };
    let jumps = trace_jump_series(&res);

    if let Err(e) = write_cell_csv(ctx, cell, &res, &eps, &jumps) {
        return nan_row(&cell.form, cell, e.to_string());
    }

    let dims = |side: usize| -> (usize, usize) {
        match &bases[side] {
            Some(b) => (b.d0(), b.d_gamma()),
            None => (0, 0),
        }
    };
    let (d0_1, d_gamma_1) = dims(0);
    let (d0_2, d_gamma_2) = dims(1);
    let max_eps = eps.iter().copied().fold(0.0, f64::max);
    SummaryRow {
        formulation: cell.form.to_string(),
        dim: cell.dim_label(),
        d0_1,
        d_gamma_1,
        d0_2,
        d_gamma_2,
        multiplier_dim: res.multiplier_dim,
        cond_schur: res.cond_schur,
        schur_spd: res.schur_spd,
        max_eps,
        final_eps: *eps.last().unwrap_or(&f64::NAN),
        max_residual: res.max_residual,
        wall_s: started.elapsed().as_secs_f64(),
        status: "ok".into(),
    }
}

fn write_cell_csv(
    ctx: &RunContext<'_>,
    cell: &Cell,
    res: &SimulationResult,
    eps: &[f64],
    jumps: &[f64],
) -> Result<()> {
    let path = runs_dir(&ctx.out).join(format!("err_{}_{}.csv", cell.form, cell.dim_label()));
    let mut w = io::csv_writer(
        &path,
        &[
            ("config", ctx.cfg.hash()),
            ("label", ctx.cfg.label.clone()),
            ("formulation", cell.form.to_string()),
            ("dim", cell.dim_label()),
        ],
    )?;
    w.write_record(["t", "eps", "residual", "trace_jump"])
        .map_err(csv_err)?;
    for j in 0..res.n_stored() {
        w.write_record([
            io::fmt_f64(res.times[j]),
            io::fmt_f64(eps[j]),
            io::fmt_f64(res.residuals[j]),
            io::fmt_f64(jumps[j]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format {
        path: "csv".into(),
        reason: e.to_string(),
    }
}

/// Runs every requested (formulation, dimension) cell against the
/// benchmark.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, jobs: Option<usize>) -> Result<()> {
    ensure_dir(&runs_dir(out))?;
    let problem = cfg.problem();
    let (s1, s2) = problem.subdomains()?;
    let norm = ErrorNorm::build(&s1, &s2);

    let started = Instant::now();
    let bench = run_single_domain(&problem)?;
    println!(
        "run: benchmark integrated, {} steps ({:.1}s)",
        problem.n_steps(),
        started.elapsed().as_secs_f64()
    );

    let forms = cfg.formulation_list()?;
    let needs_modes = forms.iter().any(|f| f.tag.reduced_side(0) || f.tag.reduced_side(1));
    let modes: [Option<StoredModes>; 2] = if needs_modes {
        [Some(load_modes(out, 1)?), Some(load_modes(out, 2)?)]
    } else {
        [None, None]
    };

    let mut cells = Vec::new();
    for form in &forms {
        let reduced = form.tag.reduced_side(0) || form.tag.reduced_side(1);
        if cfg.d_sweep.is_empty() || !reduced {
            cells.push(Cell {
                form: *form,
                d0: None,
            });
        } else {
            for &d in &cfg.d_sweep {
                cells.push(Cell {
                    form: *form,
                    d0: Some(d),
                });
            }
        }
    }

    let ctx = RunContext {
        cfg,
        problem,
        s1,
        s2,
        norm,
        bench,
        modes,
        out: out.to_path_buf(),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let rows: Vec<SummaryRow> = pool.install(|| {
        use rayon::prelude::*;
        cells.par_iter().map(|cell| run_cell(&ctx, cell)).collect()
    });

    let path = runs_dir(out).join("summary.csv");
    let mut w = io::csv_writer(
        &path,
        &[("config", cfg.hash()), ("label", cfg.label.clone())],
    )?;
    for row in &rows {
        w.serialize(row).map_err(csv_err)?;
        println!(
            "run: {} {} -> {} (eps_max = {:.3e}, cond = {:.3e}, {:.1}s)",
            row.formulation, row.dim, row.status, row.max_eps, row.cond_schur, row.wall_s
        );
    }
    w.flush()?;
    Ok(())
}

/// Reads `runs/summary.csv` back.
pub fn read_summary(out: &Path) -> Result<Vec<SummaryRow>> {
    let path = runs_dir(out).join("summary.csv");
    let mut r = io::csv_reader(&path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec.map_err(csv_err)?);
    }
    Ok(rows)
}

/// Prints the summary as an aligned table and writes a markdown copy.
pub fn cmd_report(out: &Path) -> Result<()> {
    let rows = read_summary(out)?;
    let header = [
        "formulation",
        "dim",
        "d1",
        "dg1",
        "d2",
        "dg2",
        "m",
        "cond(S)",
        "SPD",
        "max eps",
        "final eps",
        "max resid",
        "status",
    ];
    let mut table: Vec<[String; 13]> = Vec::with_capacity(rows.len());
    for r in &rows {
        table.push([
            r.formulation.clone(),
            r.dim.clone(),
            r.d0_1.to_string(),
            r.d_gamma_1.to_string(),
            r.d0_2.to_string(),
            r.d_gamma_2.to_string(),
            r.multiplier_dim.to_string(),
            format!("{:.2e}", r.cond_schur),
            if r.schur_spd { "yes" } else { "no" }.to_string(),
            format!("{:.3e}", r.max_eps),
            format!("{:.3e}", r.final_eps),
            format!("{:.3e}", r.max_residual),
            r.status.clone(),
        ]);
    }
    let mut widths = header.map(|h| h.len());
    for row in &table {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(widths.iter().copied())
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let header_strings: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    println!("{}", line(&header_strings));
    for row in &table {
        println!("{}", line(row));
    }

    let md_path = out.join("report.md");
    let mut md = String::new();
    md.push_str(&format!("| {} |\n", header.join(" | ")));
    md.push_str(&format!("|{}\n", " --- |".repeat(header.len())));
    for row in &table {
        md.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    fs::write(&md_path, md)?;
    println!("report: wrote {}", md_path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk();
        cfg.label = "tiny".into();
        cfg.nx = 8;
        cfg.dt = Some(2e-3);
        cfg.t_final = Some(0.05);
        cfg.kappa1 = 1e-3;
        cfg.kappa2 = 1e-3;
        cfg
    }

    #[test]
    fn pipeline_end_to_end_on_tiny_problem() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let cfg = tiny_config();

        cmd_snapshots(&cfg, out).unwrap();
        assert!(out.join("snapshots/main.rpmx").exists());
        assert!(out.join("snapshots/main.meta.json").exists());

        cmd_offline(&cfg, out).unwrap();
        let modes = load_modes(out, 1).unwrap();
        // 25 snapshots of 21 interior DoFs on side 1.
        assert_eq!(modes.u_interior.nrows(), 21);
        assert_eq!(modes.sigma_interior.len(), modes.u_interior.ncols());

        cmd_run(&cfg, out, Some(2)).unwrap();
        let rows = read_summary(out).unwrap();
        assert_eq!(rows.len(), 5);
        for row in &rows {
            assert_eq!(row.status, "ok", "{}: {}", row.formulation, row.status);
            assert!(row.max_eps < 0.5, "{} eps {}", row.formulation, row.max_eps);
        }
        let ff = rows.iter().find(|r| r.formulation == "FF-fLM").unwrap();
        assert!(ff.max_eps < 1e-10);
        assert!(out.join("runs/err_FF-fLM_energy.csv").exists());

        cmd_report(out).unwrap();
        assert!(out.join("report.md").exists());
    }

    #[test]
    fn sweep_produces_one_cell_per_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let mut cfg = tiny_config();
        cfg.formulations = vec!["RR-rLM".into()];
        cfg.d_sweep = vec![2, 4, 100];

        cmd_snapshots(&cfg, out).unwrap();
        cmd_offline(&cfg, out).unwrap();
        cmd_run(&cfg, out, Some(1)).unwrap();
        let rows = read_summary(out).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].dim, "d2");
        assert_eq!(rows[0].status, "ok");
        assert_eq!(rows[1].d0_1, 4);
        // Requested dimension beyond the stored rank fails cleanly.
        assert_ne!(rows[2].status, "ok");
        assert!(rows[2].max_eps.is_nan());
    }

    #[test]
    fn offline_requires_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        assert!(cmd_offline(&tiny_config(), dir.path()).is_err());
    }
}
