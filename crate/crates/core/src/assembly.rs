//! Q1 finite element operators on subdomains, stored interface-first.
//!
//! All matrices come back ordered by the subdomain's DoF permutation
//! (interface, interior, Dirichlet), so block extraction is slicing. The
//! operators are:
//! - consistent mass `M[r,s] = ∫ N_s N_r`
//! - flux `F[r,s] = ∫ (kappa grad N_s - a N_s) . grad N_r
//!   + tau (a . grad N_s)(a . grad N_r)`, so the semi-discrete system reads
//!   `M du/dt = l - F u` before boundary terms
//! - interface constraint `G`, the one-dimensional P1 mass matrix of the
//!   trace mesh, split into free-node columns and the (at most two) Dirichlet
//!   endpoint columns
//!
//! The `tau` term is streamline diffusion sized for the explicit stepper:
//! the Galerkin advection block is skew on interior nodes, so forward Euler
//! alone amplifies every mode, while `tau` of order `dt` restores dissipation
//! along streamlines (`tau = dt / 2` is the Lax-Wendroff scheme in the
//! streamline direction; the steppers take the full step, see
//! `ProblemConfig::stabilization`).
//!
//! Quadrature is 2x2 Gauss, exact for every integrand above on affine
//! rectangles with the rigid-rotation advection field; the streamline term
//! samples the advection field at element centers to stay inside that
//! degree.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::{NodeClass, Subdomain};
use crate::problem::{FieldSpec, ScalarField};

const GAUSS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Reference Q1 shape functions at (xi, eta), corners counter-clockwise from
/// the bottom-left.
fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ]
}

fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ]
}

fn scatter(sub: &Subdomain, global: &mut DMatrix<f64>, elem: &[usize; 4], local: &[[f64; 4]; 4]) {
    for (r, &nr) in elem.iter().enumerate() {
        let dr = sub.node_to_dof[nr];
        for (s, &ns) in elem.iter().enumerate() {
            global[(dr, sub.node_to_dof[ns])] += local[r][s];
        }
    }
}

/// Assembles the consistent mass matrix in DoF order.
pub fn assemble_mass(sub: &Subdomain) -> DMatrix<f64> {
    let mesh = &sub.mesh;
    let n = sub.n();
    let mut m = DMatrix::zeros(n, n);
    let det = 0.25 * mesh.hx * mesh.hy;
    let mut me = [[0.0f64; 4]; 4];
    for &gx in &GAUSS {
        for &gy in &GAUSS {
            let nsh = shape(gx, gy);
            for r in 0..4 {
                for s in 0..4 {
                    me[r][s] += det * nsh[r] * nsh[s];
                }
            }
        }
    }
    for elem in &mesh.elems {
        scatter(sub, &mut m, elem, &me);
    }
    m
}

/// Assembles the flux matrix (diffusion, advection, and streamline
/// stabilization weighted by `tau`) in DoF order. The diffusivity and the
/// stabilization velocity are sampled at element centers, the former so it
/// honors the jump across the split line; the advection field itself is
/// sampled at the quadrature points.
pub fn assemble_flux(sub: &Subdomain, fields: &FieldSpec, t: f64, tau: f64) -> DMatrix<f64> {
    let mesh = &sub.mesh;
    let n = sub.n();
    let mut f = DMatrix::zeros(n, n);
    let det = 0.25 * mesh.hx * mesh.hy;
    let jx = 2.0 / mesh.hx;
    let jy = 2.0 / mesh.hy;
    for elem in &mesh.elems {
        let bl = mesh.coords[elem[0]];
        let xc = bl[0] + 0.5 * mesh.hx;
        let yc = bl[1] + 0.5 * mesh.hy;
        let kappa = fields.kappa_at(xc);
        let ac = (fields.advection)(xc, yc, t);
        let mut fe = [[0.0f64; 4]; 4];
        for &gx in &GAUSS {
            for &gy in &GAUSS {
                let x = xc + 0.5 * mesh.hx * gx;
                let y = yc + 0.5 * mesh.hy * gy;
                let nsh = shape(gx, gy);
                let grads = shape_grad(gx, gy);
                let a = (fields.advection)(x, y, t);
                for r in 0..4 {
                    let gr = [grads[r][0] * jx, grads[r][1] * jy];
                    let sr = ac[0] * gr[0] + ac[1] * gr[1];
                    for s in 0..4 {
                        let gs = [grads[s][0] * jx, grads[s][1] * jy];
                        let diff = kappa * (gs[0] * gr[0] + gs[1] * gr[1]);
                        let adv = nsh[s] * (a[0] * gr[0] + a[1] * gr[1]);
                        let sd = tau * (ac[0] * gs[0] + ac[1] * gs[1]) * sr;
                        fe[r][s] += det * (diff - adv + sd);
                    }
                }
            }
        }
        scatter(sub, &mut f, elem, &fe);
    }
    f
}

/// Assembles the load vector `l[r] = ∫ f N_r` in DoF order.
pub fn assemble_load(sub: &Subdomain, fields: &FieldSpec, t: f64) -> DVector<f64> {
    let mesh = &sub.mesh;
    let mut l = DVector::zeros(sub.n());
    let det = 0.25 * mesh.hx * mesh.hy;
    for elem in &mesh.elems {
        let bl = mesh.coords[elem[0]];
        for &gx in &GAUSS {
            for &gy in &GAUSS {
                let x = bl[0] + 0.5 * mesh.hx * (1.0 + gx);
                let y = bl[1] + 0.5 * mesh.hy * (1.0 + gy);
                let nsh = shape(gx, gy);
                let fv = (fields.source)(x, y, t);
                for r in 0..4 {
                    l[sub.node_to_dof[elem[r]]] += det * fv * nsh[r];
                }
            }
        }
    }
    l
}

/// Interface constraint operator of one subdomain: the 1D P1 mass matrix of
/// the trace mesh, with rows indexed by the free interface DoFs.
#[derive(Debug, Clone)]
pub struct Constraint {
    /// Couplings to the subdomain's own interface DoFs, `n_gamma x n_gamma`.
    pub g_gamma: DMatrix<f64>,
    /// Couplings to Dirichlet nodes (the interface endpoints),
    /// `n_gamma x n_dirichlet`; at most two nonzero entries.
    pub g_dir: DMatrix<f64>,
}

fn interface_column(sub: &Subdomain) -> Result<Vec<usize>> {
    let col = match sub.side {
        1 => sub.mesh.nx,
        2 => 0,
        _ => {
            return Err(Error::Config(
                "whole-domain subdomain has no interface".into(),
            ))
        }
    };
    Ok((0..=sub.mesh.ny).map(|row| sub.mesh.node_id(col, row)).collect())
}

fn constraint_one_side(sub: &Subdomain) -> Result<Constraint> {
    let column = interface_column(sub)?;
    let hy = sub.mesh.hy;
    let n_d = sub.n_d();
    let mut g_gamma = DMatrix::zeros(sub.n_gamma, sub.n_gamma);
    let mut g_dir = DMatrix::zeros(sub.n_gamma, sub.n_dirichlet);
    let edge = [[2.0 * hy / 6.0, hy / 6.0], [hy / 6.0, 2.0 * hy / 6.0]];
    for w in column.windows(2) {
        let pair = [w[0], w[1]];
        for (r, &nr) in pair.iter().enumerate() {
            if sub.class[nr] != NodeClass::Interface {
                continue;
            }
            let row = sub.node_to_dof[nr];
            for (s, &ns) in pair.iter().enumerate() {
                match sub.class[ns] {
                    NodeClass::Interface => g_gamma[(row, sub.node_to_dof[ns])] += edge[r][s],
                    NodeClass::Dirichlet => {
                        g_dir[(row, sub.node_to_dof[ns] - n_d)] += edge[r][s]
                    }
                    NodeClass::Interior => {
                        return Err(Error::Config(
                            "interface column contains an interior node".into(),
                        ))
                    }
                }
            }
        }
    }
    Ok(Constraint { g_gamma, g_dir })
}

/// Assembles the constraint operators of both sides, checking that the trace
/// meshes match node for node.
pub fn assemble_constraint(s1: &Subdomain, s2: &Subdomain) -> Result<(Constraint, Constraint)> {
    if s1.n_gamma != s2.n_gamma {
        return Err(Error::DimensionMismatch(format!(
            "interface DoF counts differ: {} vs {}",
            s1.n_gamma, s2.n_gamma
        )));
    }
    let y1 = s1.interface_ys();
    let y2 = s2.interface_ys();
    for (a, b) in y1.iter().zip(&y2) {
        if (a - b).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "interface nodes do not match: y = {a} vs {b}"
            )));
        }
    }
    Ok((constraint_one_side(s1)?, constraint_one_side(s2)?))
}

/// Nodal interpolant of a scalar field on the Dirichlet nodes, in DoF order.
pub fn boundary_values(sub: &Subdomain, field: &ScalarField, t: f64) -> DVector<f64> {
    DVector::from_iterator(
        sub.n_dirichlet,
        sub.dirichlet_nodes().iter().map(|&n| {
            let c = sub.mesh.coords[n];
            field(c[0], c[1], t)
        }),
    )
}

/// Mass, flux and constraint operators of one subdomain, bundled.
#[derive(Debug, Clone)]
pub struct SubdomainOperators {
    pub n_gamma: usize,
    pub n_interior: usize,
    pub n_dirichlet: usize,
    /// Full local mass matrix in DoF order.
    pub mass: DMatrix<f64>,
    /// Full local flux matrix in DoF order.
    pub flux: DMatrix<f64>,
}

impl SubdomainOperators {
    pub fn build(sub: &Subdomain, fields: &FieldSpec, t: f64, tau: f64) -> Self {
        Self {
            n_gamma: sub.n_gamma,
            n_interior: sub.n_interior,
            n_dirichlet: sub.n_dirichlet,
            mass: assemble_mass(sub),
            flux: assemble_flux(sub, fields, t, tau),
        }
    }

    pub fn n_d(&self) -> usize {
        self.n_gamma + self.n_interior
    }

    /// Unconstrained block of the mass matrix.
    pub fn mass_dd(&self) -> DMatrix<f64> {
        let n_d = self.n_d();
        self.mass.view((0, 0), (n_d, n_d)).into_owned()
    }

    pub fn flux_dd(&self) -> DMatrix<f64> {
        let n_d = self.n_d();
        self.flux.view((0, 0), (n_d, n_d)).into_owned()
    }

    /// Coupling of the unconstrained DoFs to the Dirichlet nodes.
    pub fn mass_d_dir(&self) -> DMatrix<f64> {
        let n_d = self.n_d();
        self.mass.view((0, n_d), (n_d, self.n_dirichlet)).into_owned()
    }

    pub fn flux_d_dir(&self) -> DMatrix<f64> {
        let n_d = self.n_d();
        self.flux.view((0, n_d), (n_d, self.n_dirichlet)).into_owned()
    }

    /// Boundary forcing `Q(gdot, g) = M_{.,dir} gdot + F_{.,dir} g` on the
    /// unconstrained DoFs.
    pub fn q_boundary(&self, gdot: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        let n_d = self.n_d();
        self.mass.view((0, n_d), (n_d, self.n_dirichlet)) * gdot
            + self.flux.view((0, n_d), (n_d, self.n_dirichlet)) * g
    }
}

/// Endpoint forcing of the constraint row:
/// `Q_gamma(gdot1, gdot2) = G_{1,dir} gdot1 - G_{2,dir} gdot2`.
pub fn q_constraint(
    c1: &Constraint,
    gdot1: &DVector<f64>,
    c2: &Constraint,
    gdot2: &DVector<f64>,
) -> DVector<f64> {
    &c1.g_dir * gdot1 - &c2.g_dir * gdot2
}
