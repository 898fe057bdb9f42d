//! Proper orthogonal decomposition and composite reduced bases.
//!
//! Each subdomain gets two separate orthonormal blocks, one spanning the
//! interior snapshot rows and one spanning the interface rows. Keeping the
//! blocks disjoint means a reduced state splits cleanly into interface and
//! interior coefficients, which is what lets the interface constraint act on
//! reduced coordinates at all.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fom::SnapshotSet;
use crate::numerics::{self, svd_thin};

/// How many modes to keep for an interior block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimSelect {
    /// Smallest dimension capturing at least `1 - delta` of the snapshot
    /// energy. `delta = 0` keeps the numerical rank.
    Energy { delta: f64 },
    /// Exactly this many modes.
    Explicit(usize),
}

/// How many modes to keep for an interface block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSelect {
    Energy { delta: f64 },
    Explicit(usize),
    /// Two thirds of the interior dimension, capped by the number of
    /// interface DoFs.
    TwoThirdsRule,
}

/// `min(ceil(2 d0 / 3), d_max)`.
pub fn gamma_dim_rule(d0: usize, d_max: usize) -> usize {
    ((2 * d0 + 2) / 3).min(d_max)
}

/// Fraction of snapshot energy captured by the leading `d` singular values.
pub fn snapshot_energy(sigma: &[f64], d: usize) -> f64 {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 1.0;
    }
    sigma[..d.min(sigma.len())].iter().map(|s| s * s).sum::<f64>() / total
}

/// Smallest `d` with `snapshot_energy(sigma, d) >= 1 - delta`.
///
/// With `delta = 0` this is the numerical rank: singular values below
/// `RANK_TOL` times the largest are treated as zero.
pub fn select_dim(sigma: &[f64], delta: f64) -> usize {
    if sigma.is_empty() {
        return 0;
    }
    if delta <= 0.0 {
        let floor = numerics::RANK_TOL * sigma[0];
        return sigma.iter().take_while(|&&s| s > floor).count().max(1);
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 1;
    }
    let target = (1.0 - delta) * total;
    let mut cum = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        cum += s * s;
        if cum >= target {
            return i + 1;
        }
    }
    sigma.len()
}

/// Orthonormal interface and interior mode blocks for one subdomain.
#[derive(Debug, Clone)]
pub struct CompositeBasis {
    /// `n_interior x d0`.
    pub phi_interior: DMatrix<f64>,
    /// `n_gamma x d_gamma`.
    pub phi_gamma: DMatrix<f64>,
    pub sigma_interior: Vec<f64>,
    pub sigma_gamma: Vec<f64>,
}

impl CompositeBasis {
    pub fn d0(&self) -> usize {
        self.phi_interior.ncols()
    }

    pub fn d_gamma(&self) -> usize {
        self.phi_gamma.ncols()
    }

    pub fn d(&self) -> usize {
        self.d0() + self.d_gamma()
    }

    /// Block diagonal `[phi_gamma 0; 0 phi_interior]` acting on a reduced
    /// state ordered interface first.
    pub fn assemble_full(&self) -> DMatrix<f64> {
        let n = self.phi_gamma.nrows() + self.phi_interior.nrows();
        let mut phi = DMatrix::zeros(n, self.d());
        phi.view_mut((0, 0), (self.phi_gamma.nrows(), self.d_gamma()))
            .copy_from(&self.phi_gamma);
        phi.view_mut(
            (self.phi_gamma.nrows(), self.d_gamma()),
            (self.phi_interior.nrows(), self.d0()),
        )
        .copy_from(&self.phi_interior);
        phi
    }

    /// Projects an unconstrained DoF vector (interface first) onto the basis.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        let ng = self.phi_gamma.nrows();
        let ug = u.rows(0, ng);
        let ui = u.rows(ng, self.phi_interior.nrows());
        let mut red = DVector::zeros(self.d());
        red.rows_mut(0, self.d_gamma())
            .copy_from(&(self.phi_gamma.transpose() * ug));
        red.rows_mut(self.d_gamma(), self.d0())
            .copy_from(&(self.phi_interior.transpose() * ui));
        red
    }

    /// Lifts a reduced state back to unconstrained DoFs.
    pub fn lift(&self, red: &DVector<f64>) -> DVector<f64> {
        let ng = self.phi_gamma.nrows();
        let n0 = self.phi_interior.nrows();
        let mut u = DVector::zeros(ng + n0);
        u.rows_mut(0, ng)
            .copy_from(&(&self.phi_gamma * red.rows(0, self.d_gamma())));
        u.rows_mut(ng, n0)
            .copy_from(&(&self.phi_interior * red.rows(self.d_gamma(), self.d0())));
        u
    }

    /// Keeps the leading `d0` interior and `d_gamma` interface modes.
    pub fn truncate(&self, d0: usize, d_gamma: usize) -> Result<CompositeBasis> {
        if d0 > self.d0() || d_gamma > self.d_gamma() {
            return Err(Error::RankExceeded {
                requested: d0.max(d_gamma),
                available: self.d0().min(self.d_gamma()),
            });
        }
        Ok(CompositeBasis {
            phi_interior: self.phi_interior.columns(0, d0).into_owned(),
            phi_gamma: self.phi_gamma.columns(0, d_gamma).into_owned(),
            sigma_interior: self.sigma_interior[..d0].to_vec(),
            sigma_gamma: self.sigma_gamma[..d_gamma].to_vec(),
        })
    }

    /// Identity basis: every DoF is its own mode. A reduced model built on
    /// it reproduces the full-order model exactly.
    pub fn identity(n_gamma: usize, n_interior: usize) -> CompositeBasis {
        CompositeBasis {
            phi_interior: DMatrix::identity(n_interior, n_interior),
            phi_gamma: DMatrix::identity(n_gamma, n_gamma),
            sigma_interior: vec![1.0; n_interior],
            sigma_gamma: vec![1.0; n_gamma],
        }
    }
}

/// Builds the composite basis of one subdomain from its snapshots.
pub fn build_composite_basis(
    snaps: &SnapshotSet,
    interior: DimSelect,
    gamma: GammaSelect,
) -> Result<CompositeBasis> {
    let svd_i = svd_thin(&snaps.x_interior)?;
    let svd_g = svd_thin(&snaps.x_gamma)?;

    let d0 = resolve_dim(&svd_i.sigma, interior, svd_i.u.ncols())?;
    let d_gamma = match gamma {
        GammaSelect::Energy { delta } => {
            select_dim(svd_g.sigma.as_slice(), delta).min(svd_g.u.ncols())
        }
        GammaSelect::Explicit(d) => checked_dim(d, svd_g.u.ncols())?,
        GammaSelect::TwoThirdsRule => gamma_dim_rule(d0, snaps.x_gamma.nrows()),
    };

    Ok(CompositeBasis {
        phi_interior: svd_i.u.columns(0, d0).into_owned(),
        phi_gamma: svd_g.u.columns(0, d_gamma).into_owned(),
        sigma_interior: svd_i.sigma.as_slice()[..d0].to_vec(),
        sigma_gamma: svd_g.sigma.as_slice()[..d_gamma].to_vec(),
    })
}

fn resolve_dim(sigma: &DVector<f64>, sel: DimSelect, available: usize) -> Result<usize> {
    match sel {
        DimSelect::Energy { delta } => Ok(select_dim(sigma.as_slice(), delta).min(available)),
        DimSelect::Explicit(d) => checked_dim(d, available),
    }
}

fn checked_dim(d: usize, available: usize) -> Result<usize> {
    if d == 0 || d > available {
        Err(Error::RankExceeded {
            requested: d,
            available,
        })
    } else {
        Ok(d)
    }
}
