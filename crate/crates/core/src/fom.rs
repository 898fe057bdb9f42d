//! Single-domain reference solver and snapshot collection.
//!
//! The full-order model advances `M du/dt = l - F u - Q(gdot, g)` with
//! forward Euler on the unconstrained DoFs, lifting the Dirichlet data
//! nodally. Stored trajectories keep the full nodal vector (boundary values
//! included) in geometric node order, which makes restriction to subdomains
//! a gather over parent node ids.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{self, SubdomainOperators};
use crate::error::{Error, Result};
use crate::mesh::Subdomain;
use crate::numerics::SpdFactorization;
use crate::problem::{cfl_time_step, ProblemConfig};

/// Time history of full nodal states, one column per stored step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `n_nodes x n_stored`, geometric node order of the mesh it was run on.
    pub states: DMatrix<f64>,
    pub dt: f64,
}

impl Trajectory {
    pub fn n_stored(&self) -> usize {
        self.times.len()
    }

    /// The stored state closest to time `t`, within half a step.
    pub fn state_at(&self, t: f64) -> Option<(usize, f64)> {
        self.times
            .iter()
            .enumerate()
            .map(|(i, &ti)| (i, (ti - t).abs()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }
}

/// Evaluates the initial condition on the unconstrained DoFs of a
/// subdomain, in DoF order (interface first).
pub fn initial_dof_state(sub: &Subdomain, cfg: &ProblemConfig) -> DVector<f64> {
    DVector::from_iterator(
        sub.n_d(),
        sub.dof_to_node[..sub.n_d()].iter().map(|&node| {
            let c = sub.mesh.coords[node];
            (cfg.fields.initial)(c[0], c[1], 0.0)
        }),
    )
}

/// Gathers the unconstrained DoFs of one subdomain out of a full parent-mesh
/// state, in the subdomain's DoF order (interface first).
pub fn restrict_state(sub: &Subdomain, full: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        sub.n_d(),
        sub.dof_to_node[..sub.n_d()]
            .iter()
            .map(|&node| full[sub.parent_nodes[node]]),
    )
}

/// Runs the single-domain full-order model.
///
/// States are stored every `snapshot_stride` steps, always including step 0
/// and the final step. The last step is truncated so the run lands exactly
/// on `t_final` (unless an explicit step count overrides it).
pub fn run_single_domain(cfg: &ProblemConfig) -> Result<Trajectory> {
    let sub = cfg.whole_domain()?;
    let fields = &cfg.fields;

    let dt_cfl = cfl_time_step(&sub.mesh, fields, 1.0)?;
    if cfg.dt > 1.05 * dt_cfl {
        log::warn!(
            "dt = {:.3e} exceeds 1.05 x the forward Euler rate estimate {:.3e}",
            cfg.dt,
            dt_cfl
        );
    }

    let ops = SubdomainOperators::build(&sub, fields, 0.0, cfg.stabilization());
    let m_fact = SpdFactorization::new(&ops.mass_dd())?;
    let flux_dd = ops.flux_dd();

    let n_steps = cfg.n_steps();
    let n_d = sub.n_d();
    let n_dir = sub.n_dirichlet;

    let mut u = initial_dof_state(&sub, cfg);
    let mut g = if fields.zero_dirichlet {
        DVector::zeros(n_dir)
    } else {
        assembly::boundary_values(&sub, &fields.dirichlet, 0.0)
    };

    let stride = cfg.snapshot_stride.max(1);
    let mut stored_cols: Vec<DVector<f64>> = Vec::with_capacity(n_steps / stride + 2);
    let mut times = Vec::with_capacity(n_steps / stride + 2);
    let store = |u: &DVector<f64>, g: &DVector<f64>, t: f64,
                 cols: &mut Vec<DVector<f64>>, times: &mut Vec<f64>| {
        let mut full = DVector::zeros(sub.n());
        for (dof, &node) in sub.dof_to_node.iter().enumerate() {
            full[node] = if dof < n_d { u[dof] } else { g[dof - n_d] };
        }
        cols.push(full);
        times.push(t);
    };
    store(&u, &g, 0.0, &mut stored_cols, &mut times);

    for step in 0..n_steps {
        let t = cfg.time_at(step);
        let dt_k = cfg.dt_at(step);
        let t_next = cfg.time_at(step + 1);

        let mut rhs = -(&flux_dd * &u);
        if !fields.zero_source {
            rhs += assembly::assemble_load(&sub, fields, t).rows(0, n_d);
        }
        if !fields.zero_dirichlet {
            let g_next = assembly::boundary_values(&sub, &fields.dirichlet, t_next);
            let gdot = match &fields.dirichlet_rate {
                Some(rate) => assembly::boundary_values(&sub, rate, t),
                None => (&g_next - &g) / dt_k,
            };
            rhs -= ops.q_boundary(&gdot, &g);
            g = g_next;
        }

        let udot = m_fact.solve(&rhs);
        u += dt_k * udot;

        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Unstable { step });
        }
        if (step + 1) % stride == 0 || step + 1 == n_steps {
            store(&u, &g, t_next, &mut stored_cols, &mut times);
        }
    }

    let n_stored = stored_cols.len();
    let mut states = DMatrix::zeros(sub.n(), n_stored);
    for (j, col) in stored_cols.iter().enumerate() {
        states.set_column(j, col);
    }
    Ok(Trajectory {
        times,
        states,
        dt: cfg.dt,
    })
}

/// Snapshot matrices of one subdomain, gathered from a trajectory.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    /// All local nodes, geometric order, `n x r`.
    pub x_full: DMatrix<f64>,
    /// Unconstrained DoFs (interface then interior), `n_d x r`.
    pub x_d: DMatrix<f64>,
    /// Interface rows, `n_gamma x r`.
    pub x_gamma: DMatrix<f64>,
    /// Interior rows, `n_interior x r`.
    pub x_interior: DMatrix<f64>,
}

impl SnapshotSet {
    pub fn n_snapshots(&self) -> usize {
        self.x_full.ncols()
    }
}

/// Restricts parent-domain trajectory states to both subdomains.
///
/// The initial state (the first column) is excluded, so for a stride-one
/// trajectory over `N` steps each snapshot set has `N` columns.
pub fn restrict_to_subdomains(
    states: &DMatrix<f64>,
    s1: &Subdomain,
    s2: &Subdomain,
) -> (SnapshotSet, SnapshotSet) {
    (restrict_one(states, s1), restrict_one(states, s2))
}

fn restrict_one(states: &DMatrix<f64>, sub: &Subdomain) -> SnapshotSet {
    let r = states.ncols().saturating_sub(1);
    let n = sub.n();
    let n_d = sub.n_d();
    let mut x_full = DMatrix::zeros(n, r);
    let mut x_d = DMatrix::zeros(n_d, r);
    for j in 0..r {
        let col = states.column(j + 1);
        for node in 0..n {
            x_full[(node, j)] = col[sub.parent_nodes[node]];
        }
        for dof in 0..n_d {
            x_d[(dof, j)] = col[sub.parent_nodes[sub.dof_to_node[dof]]];
        }
    }
    let x_gamma = x_d.rows(0, sub.n_gamma).into_owned();
    let x_interior = x_d.rows(sub.n_gamma, sub.n_interior).into_owned();
    SnapshotSet {
        x_full,
        x_d,
        x_gamma,
        x_interior,
    }
}
