//! Explicit partitioned coupling with per-step interface flux recovery.
//!
//! Each subdomain carries either its assembled full-order operators or their
//! Galerkin projections onto a composite basis. At every step the interface
//! flux (a Lagrange multiplier) is recovered from a dual Schur complement of
//! the coupled mass system, after which the two subdomain updates decouple:
//!
//! ```text
//! M1 du1 = s1 - G1' lm        G1 du1 - G2 du2 = sg
//! M2 du2 = s2 + G2' lm        (G1 M1i G1' + G2 M2i G2') lm = G1 y1 - G2 y2 - sg
//! ```
//!
//! with `yi = Mi \ si`. The multiplier lives either on the full trace space
//! (`fLM`) or on one side's interface modes (`rLM`). Both `Mi \ G'` and the
//! Schur factorization are fixed in time and cached at build.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::assembly::{self, Constraint, SubdomainOperators};
use crate::error::{Error, Result};
use crate::fom::initial_dof_state;
use crate::mesh::Subdomain;
use crate::numerics::{cond2, svd_thin, SpdFactorization, SvdResult, RANK_TOL, SINGULAR_FLOOR};
use crate::pod::CompositeBasis;
use crate::problem::ProblemConfig;

/// Which side is full order, which is reduced, and where the multiplier
/// lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormulationTag {
    FfFlm,
    RrRlm,
    RrFlm,
    FrFlm,
    FrRlm,
}

impl FormulationTag {
    pub const ALL: [FormulationTag; 5] = [
        FormulationTag::FfFlm,
        FormulationTag::RrRlm,
        FormulationTag::RrFlm,
        FormulationTag::FrFlm,
        FormulationTag::FrRlm,
    ];

    /// Whether subdomain `side` (0 or 1) is reduced.
    pub fn reduced_side(self, side: usize) -> bool {
        match self {
            FormulationTag::FfFlm => false,
            FormulationTag::RrRlm | FormulationTag::RrFlm => true,
            FormulationTag::FrFlm | FormulationTag::FrRlm => side == 1,
        }
    }

    pub fn reduced_multiplier(self) -> bool {
        matches!(self, FormulationTag::RrRlm | FormulationTag::FrRlm)
    }

    /// A reduced multiplier paired with the matching interface modes keeps
    /// the constraint square and well posed. The one combination without
    /// that pairing, two reduced traces against a full multiplier, is not
    /// trace compatible and its Schur complement is rank deficient whenever
    /// the interface bases are smaller than the trace space.
    pub fn trace_compatible(self) -> bool {
        !matches!(self, FormulationTag::RrFlm)
    }

    fn default_lm_side(self) -> usize {
        match self {
            FormulationTag::FrRlm => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for FormulationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FormulationTag::FfFlm => "FF-fLM",
            FormulationTag::RrRlm => "RR-rLM",
            FormulationTag::RrFlm => "RR-fLM",
            FormulationTag::FrFlm => "FR-fLM",
            FormulationTag::FrRlm => "FR-rLM",
        };
        f.write_str(s)
    }
}

impl FromStr for FormulationTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ff-flm" => Ok(FormulationTag::FfFlm),
            "rr-rlm" => Ok(FormulationTag::RrRlm),
            "rr-flm" => Ok(FormulationTag::RrFlm),
            "fr-flm" => Ok(FormulationTag::FrFlm),
            "fr-rlm" => Ok(FormulationTag::FrRlm),
            other => Err(Error::Config(format!("unknown formulation {other:?}"))),
        }
    }
}

/// A formulation tag plus the side whose interface modes span the reduced
/// multiplier space. Irrelevant for `fLM`, where the multiplier is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formulation {
    pub tag: FormulationTag,
    pub lm_side: usize,
}

impl Formulation {
    pub fn new(tag: FormulationTag) -> Formulation {
        Formulation {
            tag,
            lm_side: tag.default_lm_side(),
        }
    }

    pub fn with_lm_side(tag: FormulationTag, lm_side: usize) -> Result<Formulation> {
        if lm_side > 1 {
            return Err(Error::Config(format!(
                "multiplier side must be 0 or 1, got {lm_side}"
            )));
        }
        if tag.reduced_multiplier() && !tag.reduced_side(lm_side) {
            return Err(Error::Config(format!(
                "{tag} needs a reduced side for the multiplier, side {lm_side} is full order"
            )));
        }
        Ok(Formulation { tag, lm_side })
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.tag.fmt(f)
    }
}

/// One subdomain's operators as the coupled scheme sees them.
#[derive(Debug, Clone)]
pub struct OnlineSide {
    pub m_hat: DMatrix<f64>,
    pub f_hat: DMatrix<f64>,
    /// Boundary coupling blocks, `n_hat x n_dirichlet`.
    pub qm_hat: DMatrix<f64>,
    pub qf_hat: DMatrix<f64>,
    /// Constraint restricted to this side's interface block (before any
    /// multiplier projection), `n_gamma x d_gamma_hat`.
    pub g_right: DMatrix<f64>,
    /// Endpoint block of the constraint, `n_gamma x n_dirichlet`.
    pub g_dir: DMatrix<f64>,
    pub basis: Option<CompositeBasis>,
    /// Interface block size of the state: `d_gamma` when reduced, `n_gamma`
    /// when full.
    pub d_gamma_hat: usize,
}

impl OnlineSide {
    pub fn build(
        sub: &Subdomain,
        ops: &SubdomainOperators,
        con: &Constraint,
        basis: Option<CompositeBasis>,
    ) -> Result<OnlineSide> {
        match basis {
            Some(b) => {
                if b.phi_gamma.nrows() != sub.n_gamma || b.phi_interior.nrows() != sub.n_interior
                {
                    return Err(Error::DimensionMismatch(format!(
                        "basis blocks {}x{} do not fit a subdomain with {} interface and {} \
                         interior DoFs",
                        b.phi_gamma.nrows(),
                        b.phi_interior.nrows(),
                        sub.n_gamma,
                        sub.n_interior
                    )));
                }
                let phi = b.assemble_full();
                let d_gamma_hat = b.d_gamma();
                Ok(OnlineSide {
                    m_hat: phi.transpose() * ops.mass_dd() * &phi,
                    f_hat: phi.transpose() * ops.flux_dd() * &phi,
                    qm_hat: phi.transpose() * ops.mass_d_dir(),
                    qf_hat: phi.transpose() * ops.flux_d_dir(),
                    g_right: &con.g_gamma * &b.phi_gamma,
                    g_dir: con.g_dir.clone(),
                    basis: Some(b),
                    d_gamma_hat,
                })
            }
            None => Ok(OnlineSide {
                m_hat: ops.mass_dd(),
                f_hat: ops.flux_dd(),
                qm_hat: ops.mass_d_dir(),
                qf_hat: ops.flux_d_dir(),
                g_right: con.g_gamma.clone(),
                g_dir: con.g_dir.clone(),
                basis: None,
                d_gamma_hat: sub.n_gamma,
            }),
        }
    }

    pub fn n_hat(&self) -> usize {
        self.m_hat.nrows()
    }

    /// Unconstrained DoF vector from the online state.
    pub fn lift(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Some(b) => b.lift(u),
            None => u.clone(),
        }
    }

    /// Interface trace from the online state.
    pub fn trace(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Some(b) => &b.phi_gamma * u.rows(0, self.d_gamma_hat),
            None => u.rows(0, self.d_gamma_hat).into_owned(),
        }
    }

    /// Online state from an unconstrained DoF vector.
    pub fn reduce(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Some(b) => b.project(u),
            None => u.clone(),
        }
    }
}

/// The recovered interface operator, factored once.
#[derive(Debug)]
pub struct SchurSystem {
    pub s: DMatrix<f64>,
    chol: Option<SpdFactorization>,
    pinv: Option<SvdResult>,
    pub cond: f64,
    pub spd: bool,
}

/// Past this, Cholesky pivots are roundoff and the factorization says
/// nothing. Incompatible trace pairings make the operator rank deficient,
/// sometimes exactly so, and the multiplier is then only determined up to
/// its null space; the truncated pseudoinverse picks the minimum-norm
/// representative deterministically.
const SCHUR_COND_LIMIT: f64 = 1e13;

impl SchurSystem {
    pub fn new(s: DMatrix<f64>) -> SchurSystem {
        let svd = svd_thin(&s).ok();
        let cond = svd.as_ref().map_or(f64::INFINITY, |f| {
            let smin = f.sigma[f.sigma.len() - 1];
            if smin < SINGULAR_FLOOR {
                f64::INFINITY
            } else {
                f.sigma[0] / smin
            }
        });
        let chol = if cond < SCHUR_COND_LIMIT {
            SpdFactorization::new(&s).ok()
        } else {
            None
        };
        if chol.is_none() {
            log::warn!(
                "interface operator is not usably SPD, solving by pseudoinverse; cond = {cond:.3e}"
            );
        }
        let spd = chol.is_some();
        let pinv = if spd { None } else { svd };
        SchurSystem {
            s,
            chol,
            pinv,
            cond,
            spd,
        }
    }

    /// Multiplier space dimension.
    pub fn m(&self) -> usize {
        self.s.nrows()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(chol) = &self.chol {
            return Ok(chol.solve(rhs));
        }
        let svd = self
            .pinv
            .as_ref()
            .ok_or(Error::SingularSystem { cond: self.cond })?;
        let cut = RANK_TOL * svd.sigma[0];
        let mut y = svd.u.transpose() * rhs;
        for i in 0..y.nrows() {
            y[i] = if svd.sigma[i] > cut { y[i] / svd.sigma[i] } else { 0.0 };
        }
        Ok(&svd.v * y)
    }
}

/// Everything fixed in time: factored masses, projected constraints, the
/// Schur complement, and the cached multiplier propagators `Mi \ Gi'`.
#[derive(Debug)]
pub struct CoupledSystem {
    pub form: Formulation,
    pub subs: [Subdomain; 2],
    pub sides: [OnlineSide; 2],
    m_fact: [SpdFactorization; 2],
    /// `Mi \ [Gi_hat 0]'`, `n_hat_i x m`.
    w: [DMatrix<f64>; 2],
    /// Multiplier-projected constraint blocks, `m x d_gamma_hat_i`.
    pub g_hat: [DMatrix<f64>; 2],
    /// Multiplier-projected endpoint blocks, `m x n_dirichlet_i`.
    pub g_dir_hat: [DMatrix<f64>; 2],
    pub schur: SchurSystem,
    /// Interface modes of the multiplier side when the multiplier is
    /// reduced.
    lm_basis: Option<DMatrix<f64>>,
}

/// One velocity solve: decoupled subdomain rates, the recovered multiplier,
/// and the constraint residual measured in the multiplier space.
#[derive(Debug, Clone)]
pub struct Velocity {
    pub udot: [DVector<f64>; 2],
    pub lambda: DVector<f64>,
    pub residual: f64,
}

pub fn build_coupled_system(
    cfg: &ProblemConfig,
    form: Formulation,
    bases: [Option<&CompositeBasis>; 2],
) -> Result<CoupledSystem> {
    for side in 0..2 {
        let reduced = form.tag.reduced_side(side);
        if reduced && bases[side].is_none() {
            return Err(Error::Config(format!(
                "{form} reduces side {side} but no basis was given"
            )));
        }
        if !reduced && bases[side].is_some() {
            return Err(Error::Config(format!(
                "{form} keeps side {side} full order but a basis was given"
            )));
        }
    }
    if form.tag.reduced_multiplier() && !form.tag.reduced_side(form.lm_side) {
        return Err(Error::Config(format!(
            "{form} multiplier side {} is full order",
            form.lm_side
        )));
    }

    let (s1, s2) = cfg.subdomains()?;
    let (con1, con2) = assembly::assemble_constraint(&s1, &s2)?;
    let ops1 = SubdomainOperators::build(&s1, &cfg.fields, 0.0, cfg.stabilization());
    let ops2 = SubdomainOperators::build(&s2, &cfg.fields, 0.0, cfg.stabilization());
    let sides = [
        OnlineSide::build(&s1, &ops1, &con1, bases[0].cloned())?,
        OnlineSide::build(&s2, &ops2, &con2, bases[1].cloned())?,
    ];
    let subs = [s1, s2];

    let lm_basis = if form.tag.reduced_multiplier() {
        Some(bases[form.lm_side].unwrap().phi_gamma.clone())
    } else {
        None
    };
    let project_lm = |x: &DMatrix<f64>| match &lm_basis {
        Some(phi) => phi.transpose() * x,
        None => x.clone(),
    };
    let g_hat = [project_lm(&sides[0].g_right), project_lm(&sides[1].g_right)];
    let g_dir_hat = [project_lm(&sides[0].g_dir), project_lm(&sides[1].g_dir)];
    let m = g_hat[0].nrows();

    let m_fact = [
        SpdFactorization::new(&sides[0].m_hat)?,
        SpdFactorization::new(&sides[1].m_hat)?,
    ];
    let mut w = Vec::with_capacity(2);
    for i in 0..2 {
        let mut gt_ext = DMatrix::zeros(sides[i].n_hat(), m);
        gt_ext
            .view_mut((0, 0), (sides[i].d_gamma_hat, m))
            .copy_from(&g_hat[i].transpose());
        w.push(m_fact[i].solve_mat(&gt_ext));
    }
    let w: [DMatrix<f64>; 2] = [w.remove(0), w.remove(0)];

    let s_mat = &g_hat[0] * w[0].rows(0, sides[0].d_gamma_hat)
        + &g_hat[1] * w[1].rows(0, sides[1].d_gamma_hat);
    let schur = SchurSystem::new(s_mat);

    Ok(CoupledSystem {
        form,
        subs,
        sides,
        m_fact,
        w,
        g_hat,
        g_dir_hat,
        schur,
        lm_basis,
    })
}

impl CoupledSystem {
    /// Full-trace multiplier from its online representation.
    pub fn lift_multiplier(&self, lambda: &DVector<f64>) -> DVector<f64> {
        match &self.lm_basis {
            Some(phi) => phi * lambda,
            None => lambda.clone(),
        }
    }

    fn side_rhs(
        &self,
        cfg: &ProblemConfig,
        i: usize,
        t: f64,
        u: &DVector<f64>,
        g: &DVector<f64>,
        gdot: &DVector<f64>,
    ) -> DVector<f64> {
        let side = &self.sides[i];
        let mut s = -(&side.f_hat * u);
        if !cfg.fields.zero_source {
            let load = assembly::assemble_load(&self.subs[i], &cfg.fields, t)
                .rows(0, self.subs[i].n_d())
                .into_owned();
            s += side.reduce(&load);
        }
        if !cfg.fields.zero_dirichlet {
            s -= &side.qm_hat * gdot + &side.qf_hat * g;
        }
        s
    }

    fn constraint_rhs(&self, cfg: &ProblemConfig, gdot: &[DVector<f64>; 2]) -> DVector<f64> {
        if cfg.fields.zero_dirichlet {
            return DVector::zeros(self.schur.m());
        }
        -(&self.g_dir_hat[0] * &gdot[0] - &self.g_dir_hat[1] * &gdot[1])
    }

    /// Recovers the multiplier and the decoupled subdomain rates at one
    /// instant.
    pub fn velocity(
        &self,
        cfg: &ProblemConfig,
        t: f64,
        u: &[DVector<f64>; 2],
        g: &[DVector<f64>; 2],
        gdot: &[DVector<f64>; 2],
    ) -> Result<Velocity> {
        let s1 = self.side_rhs(cfg, 0, t, &u[0], &g[0], &gdot[0]);
        let s2 = self.side_rhs(cfg, 1, t, &u[1], &g[1], &gdot[1]);
        let y1 = self.m_fact[0].solve(&s1);
        let y2 = self.m_fact[1].solve(&s2);
        let s_gamma = self.constraint_rhs(cfg, gdot);

        let dg = [self.sides[0].d_gamma_hat, self.sides[1].d_gamma_hat];
        let rhs = &self.g_hat[0] * y1.rows(0, dg[0]) - &self.g_hat[1] * y2.rows(0, dg[1])
            - &s_gamma;
        let lambda = self.schur.solve(&rhs)?;

        let udot = [&y1 - &self.w[0] * &lambda, &y2 + &self.w[1] * &lambda];
        let residual = (&self.g_hat[0] * udot[0].rows(0, dg[0])
            - &self.g_hat[1] * udot[1].rows(0, dg[1])
            - s_gamma)
            .amax();
        Ok(Velocity {
            udot,
            lambda,
            residual,
        })
    }

    /// Solves the undecomposed saddle system in one piece. Slow; exists as
    /// a cross-check on the Schur path.
    pub fn monolithic_velocity(
        &self,
        cfg: &ProblemConfig,
        t: f64,
        u: &[DVector<f64>; 2],
        g: &[DVector<f64>; 2],
        gdot: &[DVector<f64>; 2],
    ) -> Result<Velocity> {
        let s1 = self.side_rhs(cfg, 0, t, &u[0], &g[0], &gdot[0]);
        let s2 = self.side_rhs(cfg, 1, t, &u[1], &g[1], &gdot[1]);
        let s_gamma = self.constraint_rhs(cfg, gdot);

        let (n1, n2, m) = (self.sides[0].n_hat(), self.sides[1].n_hat(), self.schur.m());
        let dg = [self.sides[0].d_gamma_hat, self.sides[1].d_gamma_hat];
        let mut k = DMatrix::zeros(n1 + n2 + m, n1 + n2 + m);
        k.view_mut((0, 0), (n1, n1)).copy_from(&self.sides[0].m_hat);
        k.view_mut((n1, n1), (n2, n2)).copy_from(&self.sides[1].m_hat);
        k.view_mut((n1 + n2, 0), (m, dg[0])).copy_from(&self.g_hat[0]);
        k.view_mut((0, n1 + n2), (dg[0], m))
            .copy_from(&self.g_hat[0].transpose());
        k.view_mut((n1 + n2, n1), (m, dg[1]))
            .copy_from(&(-&self.g_hat[1]));
        k.view_mut((n1, n1 + n2), (dg[1], m))
            .copy_from(&(-self.g_hat[1].transpose()));

        let mut rhs = DVector::zeros(n1 + n2 + m);
        rhs.rows_mut(0, n1).copy_from(&s1);
        rhs.rows_mut(n1, n2).copy_from(&s2);
        rhs.rows_mut(n1 + n2, m).copy_from(&s_gamma);

        let sol = k
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularSystem { cond: cond2(&k) })?;
        let udot = [
            sol.rows(0, n1).into_owned(),
            sol.rows(n1, n2).into_owned(),
        ];
        let lambda = sol.rows(n1 + n2, m).into_owned();
        let residual = (&self.g_hat[0] * udot[0].rows(0, dg[0])
            - &self.g_hat[1] * udot[1].rows(0, dg[1])
            - s_gamma)
            .amax();
        Ok(Velocity {
            udot,
            lambda,
            residual,
        })
    }

    fn boundary(&self, cfg: &ProblemConfig, t: f64) -> [DVector<f64>; 2] {
        if cfg.fields.zero_dirichlet {
            [
                DVector::zeros(self.subs[0].n_dirichlet),
                DVector::zeros(self.subs[1].n_dirichlet),
            ]
        } else {
            [
                assembly::boundary_values(&self.subs[0], &cfg.fields.dirichlet, t),
                assembly::boundary_values(&self.subs[1], &cfg.fields.dirichlet, t),
            ]
        }
    }

    fn boundary_rate(
        &self,
        cfg: &ProblemConfig,
        t: f64,
        g: &[DVector<f64>; 2],
        g_next: &[DVector<f64>; 2],
        dt: f64,
    ) -> [DVector<f64>; 2] {
        if cfg.fields.zero_dirichlet {
            return [
                DVector::zeros(self.subs[0].n_dirichlet),
                DVector::zeros(self.subs[1].n_dirichlet),
            ];
        }
        match &cfg.fields.dirichlet_rate {
            Some(rate) => [
                assembly::boundary_values(&self.subs[0], rate, t),
                assembly::boundary_values(&self.subs[1], rate, t),
            ],
            None => [(&g_next[0] - &g[0]) / dt, (&g_next[1] - &g[1]) / dt],
        }
    }

    /// Advances the coupled pair over the configured time window.
    pub fn run(&self, cfg: &ProblemConfig) -> Result<SimulationResult> {
        let n_steps = cfg.n_steps();
        let stride = cfg.snapshot_stride.max(1);

        let mut u = [
            self.sides[0].reduce(&initial_dof_state(&self.subs[0], cfg)),
            self.sides[1].reduce(&initial_dof_state(&self.subs[1], cfg)),
        ];
        let mut g = self.boundary(cfg, 0.0);

        let cap = n_steps / stride + 2;
        let mut times = Vec::with_capacity(cap);
        let mut states: [Vec<DVector<f64>>; 2] = [Vec::with_capacity(cap), Vec::with_capacity(cap)];
        let mut traces: [Vec<DVector<f64>>; 2] = [Vec::with_capacity(cap), Vec::with_capacity(cap)];
        let mut lambdas: Vec<DVector<f64>> = Vec::with_capacity(cap);
        let mut residuals: Vec<f64> = Vec::with_capacity(cap);
        let mut max_residual: f64 = 0.0;

        let push_state = |u: &[DVector<f64>; 2],
                              t: f64,
                              times: &mut Vec<f64>,
                              states: &mut [Vec<DVector<f64>>; 2],
                              traces: &mut [Vec<DVector<f64>>; 2]| {
            for i in 0..2 {
                states[i].push(self.sides[i].lift(&u[i]));
                traces[i].push(self.sides[i].trace(&u[i]));
            }
            times.push(t);
        };
        push_state(&u, 0.0, &mut times, &mut states, &mut traces);

        for step in 0..n_steps {
            let t = cfg.time_at(step);
            let dt_k = cfg.dt_at(step);
            let t_next = cfg.time_at(step + 1);
            let g_next = self.boundary(cfg, t_next);
            let gdot = self.boundary_rate(cfg, t, &g, &g_next, dt_k);

            let vel = self.velocity(cfg, t, &u, &g, &gdot)?;
            max_residual = max_residual.max(vel.residual);
            if step % stride == 0 {
                lambdas.push(self.lift_multiplier(&vel.lambda));
                residuals.push(vel.residual);
            }

            for i in 0..2 {
                u[i] += dt_k * &vel.udot[i];
                if u[i].iter().any(|v| !v.is_finite()) {
                    return Err(Error::Unstable { step });
                }
            }
            g = g_next;
            if (step + 1) % stride == 0 || step + 1 == n_steps {
                push_state(&u, t_next, &mut times, &mut states, &mut traces);
            }
        }

        // The multiplier at the final time is plain algebra on the final
        // state; solve once more so its history spans the stored times.
        let t_end = cfg.time_at(n_steps);
        let g_ahead = self.boundary(cfg, t_end + cfg.dt);
        let gdot = self.boundary_rate(cfg, t_end, &g, &g_ahead, cfg.dt);
        let vel = self.velocity(cfg, t_end, &u, &g, &gdot)?;
        lambdas.push(self.lift_multiplier(&vel.lambda));
        residuals.push(vel.residual);

        Ok(SimulationResult {
            times,
            states: [collect_cols(&states[0]), collect_cols(&states[1])],
            traces: [collect_cols(&traces[0]), collect_cols(&traces[1])],
            lambda: collect_cols(&lambdas),
            residuals,
            max_residual,
            cond_schur: self.schur.cond,
            schur_spd: self.schur.spd,
            multiplier_dim: self.schur.m(),
            n_steps,
        })
    }
}

fn collect_cols(cols: &[DVector<f64>]) -> DMatrix<f64> {
    let nrows = cols.first().map_or(0, |c| c.len());
    let mut m = DMatrix::zeros(nrows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Stored history of a coupled run. States are lifted to unconstrained
/// subdomain DoFs, traces and multipliers to the full interface.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub states: [DMatrix<f64>; 2],
    pub traces: [DMatrix<f64>; 2],
    pub lambda: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub cond_schur: f64,
    pub schur_spd: bool,
    pub multiplier_dim: usize,
    pub n_steps: usize,
}

impl SimulationResult {
    pub fn n_stored(&self) -> usize {
        self.times.len()
    }
}

/// Builds the coupled system and runs it.
pub fn run_coupled(
    cfg: &ProblemConfig,
    form: Formulation,
    bases: [Option<&CompositeBasis>; 2],
) -> Result<SimulationResult> {
    build_coupled_system(cfg, form, bases)?.run(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{restrict_state, run_single_domain};
    use crate::problem::{manufactured_problem, solid_body_rotation_config};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthonormal(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() - 0.5);
        a.qr().q().columns(0, d).into_owned()
    }

    fn random_basis(sub: &Subdomain, d0: usize, dg: usize, seed: u64) -> CompositeBasis {
        CompositeBasis {
            phi_interior: random_orthonormal(sub.n_interior, d0, seed),
            phi_gamma: random_orthonormal(sub.n_gamma, dg, seed + 1),
            sigma_interior: vec![1.0; d0],
            sigma_gamma: vec![1.0; dg],
        }
    }

    #[test]
    fn tag_names_round_trip() {
        for tag in FormulationTag::ALL {
            assert_eq!(tag.to_string().parse::<FormulationTag>().unwrap(), tag);
        }
        assert_eq!("rr_rlm".parse::<FormulationTag>().unwrap(), FormulationTag::RrRlm);
        assert!("RF-fLM".parse::<FormulationTag>().is_err());
    }

    #[test]
    fn multiplier_side_validation() {
        assert_eq!(Formulation::new(FormulationTag::FrRlm).lm_side, 1);
        assert_eq!(Formulation::new(FormulationTag::RrRlm).lm_side, 0);
        assert!(Formulation::with_lm_side(FormulationTag::RrRlm, 1).is_ok());
        assert!(Formulation::with_lm_side(FormulationTag::FrRlm, 0).is_err());
        assert!(Formulation::with_lm_side(FormulationTag::FfFlm, 2).is_err());
    }

    #[test]
    fn basis_presence_is_checked() {
        let cfg = solid_body_rotation_config(1e-3, 1e-3, 4);
        let err = build_coupled_system(&cfg, Formulation::new(FormulationTag::RrRlm), [None, None]);
        assert!(err.is_err());
        let (s1, _) = cfg.subdomains().unwrap();
        let b = random_basis(&s1, 2, 2, 0);
        let err = build_coupled_system(
            &cfg,
            Formulation::new(FormulationTag::FfFlm),
            [Some(&b), None],
        );
        assert!(err.is_err());
    }

    #[test]
    fn ff_tracks_single_domain_run() {
        let mut cfg = solid_body_rotation_config(1e-3, 1e-3, 8);
        cfg.t_final = 0.06;
        cfg.dt = 2e-3;
        let mono = run_single_domain(&cfg).unwrap();
        let res = run_coupled(&cfg, Formulation::new(FormulationTag::FfFlm), [None, None])
            .unwrap();
        let (s1, s2) = cfg.subdomains().unwrap();
        let j = res.n_stored() - 1;
        let full = mono.states.column(mono.n_stored() - 1).into_owned();
        for (i, sub) in [(0, &s1), (1, &s2)] {
            let want = restrict_state(sub, &full);
            let got = res.states[i].column(j).into_owned();
            assert!((got - want).amax() < 1e-11);
        }
        assert!(res.max_residual < 1e-12);
        assert!(res.schur_spd);
    }

    #[test]
    fn identity_bases_reproduce_full_coupling() {
        let mut cfg = solid_body_rotation_config(1e-3, 1e-4, 8);
        cfg.t_final = 0.04;
        cfg.dt = 2e-3;
        let ff = run_coupled(&cfg, Formulation::new(FormulationTag::FfFlm), [None, None])
            .unwrap();
        let (s1, s2) = cfg.subdomains().unwrap();
        let b1 = CompositeBasis::identity(s1.n_gamma, s1.n_interior);
        let b2 = CompositeBasis::identity(s2.n_gamma, s2.n_interior);
        for tag in [FormulationTag::RrRlm, FormulationTag::RrFlm, FormulationTag::FrFlm] {
            let bases = match tag {
                FormulationTag::FrFlm => [None, Some(&b2)],
                _ => [Some(&b1), Some(&b2)],
            };
            let res = run_coupled(&cfg, Formulation::new(tag), bases).unwrap();
            let j = res.n_stored() - 1;
            for i in 0..2 {
                let diff = (res.states[i].column(j) - ff.states[i].column(j)).amax();
                assert!(diff < 1e-12, "{tag}: diff = {diff:.3e}");
            }
        }
    }

    #[test]
    fn schur_matches_monolithic_solve() {
        let (mut cfg, _) = manufactured_problem("sin-decay").unwrap();
        cfg.nx = 4;
        cfg.ny = 4;
        let (s1, s2) = cfg.subdomains().unwrap();
        let b1 = random_basis(&s1, 3, 2, 11);
        let b2 = random_basis(&s2, 3, 2, 13);

        for tag in FormulationTag::ALL {
            let bases: [Option<&CompositeBasis>; 2] = [
                tag.reduced_side(0).then_some(&b1),
                tag.reduced_side(1).then_some(&b2),
            ];
            let sys = build_coupled_system(&cfg, Formulation::new(tag), bases).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let u = [
                DVector::from_fn(sys.sides[0].n_hat(), |_, _| rng.random::<f64>() - 0.5),
                DVector::from_fn(sys.sides[1].n_hat(), |_, _| rng.random::<f64>() - 0.5),
            ];
            let t = 0.03;
            let g = sys.boundary(&cfg, t);
            let gdot = sys.boundary_rate(&cfg, t, &g, &g, cfg.dt);
            let fast = sys.velocity(&cfg, t, &u, &g, &gdot).unwrap();
            let slow = sys.monolithic_velocity(&cfg, t, &u, &g, &gdot).unwrap();
            for i in 0..2 {
                assert!(
                    (&fast.udot[i] - &slow.udot[i]).amax() < 1e-9,
                    "{tag} side {i}"
                );
            }
            assert!((&fast.lambda - &slow.lambda).amax() < 1e-9, "{tag}");
        }
    }

    #[test]
    fn full_multiplier_enforces_pointwise_constraint() {
        let mut cfg = solid_body_rotation_config(1e-3, 1e-3, 8);
        cfg.t_final = 0.04;
        cfg.dt = 2e-3;
        let (s1, s2) = cfg.subdomains().unwrap();
        let b1 = random_basis(&s1, 4, 3, 21);
        let b2 = random_basis(&s2, 4, 3, 23);
        let res = run_coupled(
            &cfg,
            Formulation::new(FormulationTag::FrFlm),
            [None, Some(&b2)],
        )
        .unwrap();
        assert!(res.max_residual < 1e-10);
        // The reduced multiplier only controls the projected residual.
        let res = run_coupled(
            &cfg,
            Formulation::new(FormulationTag::RrRlm),
            [Some(&b1), Some(&b2)],
        )
        .unwrap();
        assert!(res.max_residual < 1e-10);
    }

    #[test]
    fn incompatible_traces_degrade_conditioning() {
        let mut cfg = solid_body_rotation_config(1e-3, 1e-3, 8);
        cfg.t_final = 0.02;
        cfg.dt = 2e-3;
        let (s1, s2) = cfg.subdomains().unwrap();
        // Interface bases strictly smaller than the trace space.
        let b1 = random_basis(&s1, 4, 3, 31);
        let b2 = random_basis(&s2, 4, 3, 33);
        let sys_flm = build_coupled_system(
            &cfg,
            Formulation::new(FormulationTag::RrFlm),
            [Some(&b1), Some(&b2)],
        )
        .unwrap();
        let sys_rlm = build_coupled_system(
            &cfg,
            Formulation::new(FormulationTag::RrRlm),
            [Some(&b1), Some(&b2)],
        )
        .unwrap();
        assert!(!sys_flm.schur.spd);
        assert!(sys_rlm.schur.spd);
        assert!(sys_flm.schur.cond > 1e3 * sys_rlm.schur.cond);
    }

    #[test]
    fn lambda_history_spans_stored_times() {
        let mut cfg = solid_body_rotation_config(1e-3, 1e-3, 4);
        cfg.t_final = 0.01;
        cfg.dt = 1e-3;
        cfg.snapshot_stride = 4;
        let res = run_coupled(&cfg, Formulation::new(FormulationTag::FfFlm), [None, None])
            .unwrap();
        assert_eq!(res.n_stored(), 4);
        assert_eq!(res.lambda.ncols(), 4);
        assert_eq!(res.residuals.len(), 4);
        let (s1, _) = cfg.subdomains().unwrap();
        assert_eq!(res.lambda.nrows(), s1.n_gamma);
        assert_eq!(res.traces[0].nrows(), s1.n_gamma);
        assert!((&res.traces[0] - &res.traces[1]).amax() < 1e-12);
    }
}
