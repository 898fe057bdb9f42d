//! Problem definitions: coefficient fields, boundary and initial data, time
//! step selection, and the built-in benchmark configurations.
//!
//! The model equation on each subdomain is
//! `du/dt - div(kappa grad u - a u) = f` with Dirichlet data `g` on the outer
//! boundary. The diffusivity may jump across the split line; advection,
//! source and boundary data are global closures evaluated pointwise.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{self, DirichletSides, Mesh, Subdomain};

pub type ScalarField = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;

/// Coefficients and data of one transmission problem.
#[derive(Clone)]
pub struct FieldSpec {
    /// Diffusivity on the left and right of `split_x`.
    pub kappa: [f64; 2],
    pub split_x: f64,
    pub advection: VectorField,
    pub source: ScalarField,
    pub dirichlet: ScalarField,
    /// Analytic time derivative of the Dirichlet data, when available. When
    /// absent, the steppers fall back to a backward difference.
    pub dirichlet_rate: Option<ScalarField>,
    pub initial: ScalarField,
    /// True when `kappa` and `advection` do not depend on time, so the flux
    /// matrix can be assembled once.
    pub autonomous_flux: bool,
    pub zero_source: bool,
    pub zero_dirichlet: bool,
}

impl FieldSpec {
    /// Diffusivity at `x`, honoring the jump across the split line.
    pub fn kappa_at(&self, x: f64) -> f64 {
        if x < self.split_x {
            self.kappa[0]
        } else {
            self.kappa[1]
        }
    }
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSpec")
            .field("kappa", &self.kappa)
            .field("split_x", &self.split_x)
            .field("autonomous_flux", &self.autonomous_flux)
            .field("zero_source", &self.zero_source)
            .field("zero_dirichlet", &self.zero_dirichlet)
            .finish()
    }
}

/// A fully specified initial-boundary value problem on a partitioned
/// rectangle, plus its time discretization.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub nx: usize,
    pub ny: usize,
    pub rect: [f64; 4],
    pub split_x: f64,
    pub dirichlet_sides: DirichletSides,
    pub fields: FieldSpec,
    pub t_final: f64,
    pub dt: f64,
    /// Explicit step count. When unset, `ceil(t_final / dt)` steps are taken
    /// and the last step is truncated so the run lands exactly on `t_final`.
    /// When set, exactly this many full `dt` steps are taken.
    pub n_steps_override: Option<usize>,
    /// Every how many steps a state is stored (step 0 and the final step are
    /// always kept).
    pub snapshot_stride: usize,
}

impl ProblemConfig {
    pub fn n_steps(&self) -> usize {
        match self.n_steps_override {
            Some(n) => n,
            None => ((self.t_final / self.dt) - 1e-9).ceil().max(1.0) as usize,
        }
    }

    /// Time after `k` steps, accounting for the truncated final step.
    pub fn time_at(&self, k: usize) -> f64 {
        let t = k as f64 * self.dt;
        if self.n_steps_override.is_some() {
            t
        } else {
            t.min(self.t_final)
        }
    }

    /// Length of step `k` (0-based).
    pub fn dt_at(&self, k: usize) -> f64 {
        self.time_at(k + 1) - self.time_at(k)
    }

    /// Streamline diffusion weight paired with the explicit stepper. The
    /// Galerkin advection block is skew on interior nodes, so plain forward
    /// Euler amplifies every mode; a streamline term with `tau` on the order
    /// of the step keeps the update dissipative. The Lax-Wendroff weight
    /// `dt / 2` only damps at fourth order and lets marginal grid-scale modes
    /// ring for thousands of steps; the full step damps every wavenumber at
    /// leading order (numerical diffusion `dt |a|^2 / 2` along streamlines)
    /// while staying far below the crosswind smearing of a steady-state
    /// upwind weight `h / (2 |a|)`.
    pub fn stabilization(&self) -> f64 {
        self.dt
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        mesh::build_uniform_mesh(self.nx, self.ny, self.rect)
    }

    pub fn subdomains(&self) -> Result<(Subdomain, Subdomain)> {
        let m = self.build_mesh()?;
        mesh::partition_at(&m, self.split_x, self.dirichlet_sides)
    }

    pub fn whole_domain(&self) -> Result<Subdomain> {
        Ok(Subdomain::whole(self.build_mesh()?, self.dirichlet_sides))
    }
}

/// Time step for forward Euler from the advective and diffusive grid rates:
/// `dt = safety / (max|a| / h + 4 max(kappa) / h^2)`, with `max|a|` sampled
/// over the mesh nodes at `t = 0` and `h` the smaller element side.
pub fn cfl_time_step(mesh: &Mesh, fields: &FieldSpec, safety: f64) -> Result<f64> {
    let h = mesh.hx.min(mesh.hy);
    let amax = mesh
        .coords
        .iter()
        .map(|c| {
            let a = (fields.advection)(c[0], c[1], 0.0);
            (a[0] * a[0] + a[1] * a[1]).sqrt()
        })
        .fold(0.0f64, f64::max);
    let kmax = fields.kappa[0].max(fields.kappa[1]);
    let denom = amax / h + 4.0 * kmax / (h * h);
    if denom <= 0.0 {
        return Err(Error::Config(
            "CFL rate is zero: advection and diffusion both vanish".into(),
        ));
    }
    Ok(safety / denom)
}

/// Initial condition with a slotted cylinder at (0.5, 0.75), a cone at
/// (0.5, 0.25) and a smooth hump at (0.25, 0.5), each of radius 0.15.
pub fn rotating_bodies_initial(x: f64, y: f64) -> f64 {
    const R0: f64 = 0.15;
    let d = |cx: f64, cy: f64| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();

    let d_cyl = d(0.5, 0.75);
    if d_cyl <= R0 && !((x - 0.5).abs() < 0.025 && y < 0.85) {
        return 1.0;
    }
    let d_cone = d(0.5, 0.25);
    if d_cone <= R0 {
        return 1.0 - d_cone / R0;
    }
    let d_hump = d(0.25, 0.5);
    0.25 * (1.0 + (PI * (d_hump / R0).min(1.0)).cos())
}

/// Rigid-rotation benchmark on the unit square split at `x = 0.5`:
/// `a = (0.5 - y, x - 0.5)`, homogeneous Dirichlet data, zero source, and the
/// three rotating bodies as initial condition. One full revolution takes
/// `t = 2 pi`.
///
/// The default `dt` reproduces the reference step sizes at `nx = 64`
/// (9.156e-4 when `max(kappa) >= 1e-3`, else 1.684e-3) and scales
/// proportionally to the element size; override it freely.
pub fn solid_body_rotation_config(kappa1: f64, kappa2: f64, nx: usize) -> ProblemConfig {
    let dt_64 = if kappa1.max(kappa2) >= 1e-3 {
        9.156e-4
    } else {
        1.684e-3
    };
    ProblemConfig {
        nx,
        ny: nx,
        rect: [0.0, 1.0, 0.0, 1.0],
        split_x: 0.5,
        dirichlet_sides: DirichletSides::default(),
        fields: FieldSpec {
            kappa: [kappa1, kappa2],
            split_x: 0.5,
            advection: Arc::new(|x, y, _| [0.5 - y, x - 0.5]),
            source: Arc::new(|_, _, _| 0.0),
            dirichlet: Arc::new(|_, _, _| 0.0),
            dirichlet_rate: Some(Arc::new(|_, _, _| 0.0)),
            initial: Arc::new(|x, y, _| rotating_bodies_initial(x, y)),
            autonomous_flux: true,
            zero_source: true,
            zero_dirichlet: true,
        },
        t_final: 2.0 * PI,
        dt: dt_64 * 64.0 / nx as f64,
        n_steps_override: None,
        snapshot_stride: 1,
    }
}

/// A manufactured problem with a known exact solution, nonzero time-dependent
/// boundary data and a matching source, for convergence and coupling tests.
///
/// Registered ids:
/// - `"sin-decay"`: `u = exp(-t) (1 + sin(pi x) sin(pi y))` under the rigid
///   rotation field, `kappa = [0.7, 0.02]`. The normal derivative of `u`
///   vanishes on `x = 0.5`, so the diffusivity jump is compatible with a
///   single smooth solution.
pub fn manufactured_problem(id: &str) -> Result<(ProblemConfig, ScalarField)> {
    match id {
        "sin-decay" => {}
        other => {
            return Err(Error::Config(format!(
                "unknown manufactured problem id {other:?}"
            )))
        }
    }

    let kappa = [0.7, 0.02];
    let split_x = 0.5;
    let exact: ScalarField =
        Arc::new(|x, y, t| (-t).exp() * (1.0 + (PI * x).sin() * (PI * y).sin()));
    let exact_rate: ScalarField =
        Arc::new(|x, y, t| -(-t).exp() * (1.0 + (PI * x).sin() * (PI * y).sin()));
    let source: ScalarField = Arc::new(move |x, y, t| {
        let k = if x < split_x { kappa[0] } else { kappa[1] };
        let e = (-t).exp();
        let s = (PI * x).sin() * (PI * y).sin();
        let u = e * (1.0 + s);
        let lap = -2.0 * PI * PI * e * s;
        let adv = e
            * PI
            * ((0.5 - y) * (PI * x).cos() * (PI * y).sin()
                + (x - 0.5) * (PI * x).sin() * (PI * y).cos());
        -u - k * lap + adv
    });

    let fields = FieldSpec {
        kappa,
        split_x,
        advection: Arc::new(|x, y, _| [0.5 - y, x - 0.5]),
        source,
        dirichlet: exact.clone(),
        dirichlet_rate: Some(exact_rate),
        initial: {
            let exact = exact.clone();
            Arc::new(move |x, y, _| exact(x, y, 0.0))
        },
        autonomous_flux: true,
        zero_source: false,
        zero_dirichlet: false,
    };
    let nx = 8;
    let cfg = ProblemConfig {
        nx,
        ny: nx,
        rect: [0.0, 1.0, 0.0, 1.0],
        split_x,
        dirichlet_sides: DirichletSides::default(),
        fields,
        t_final: 0.1,
        dt: 1e-3,
        n_steps_override: None,
        snapshot_stride: 1,
    };
    Ok((cfg, exact))
}
