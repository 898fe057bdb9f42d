//! Error norms for comparing coupled runs against a benchmark.
//!
//! The state of a coupled pair lives in the product of the two subdomain
//! spaces; distances use the broken mass norm, so discrete results are
//! consistent with the continuous L2 norm on the whole domain.

use nalgebra::{DMatrix, DVector};

use crate::assembly::assemble_mass;
use crate::error::{Error, Result};
use crate::fom::{restrict_state, Trajectory};
use crate::ivr::SimulationResult;
use crate::mesh::Subdomain;

/// Squared broken mass norm of a pair of unconstrained DoF vectors.
pub fn v_norm_sq(
    v1: &DVector<f64>,
    v2: &DVector<f64>,
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
) -> f64 {
    (v1.transpose() * m1 * v1)[(0, 0)] + (v2.transpose() * m2 * v2)[(0, 0)]
}

/// `||u - b|| / ||b||` in the broken mass norm.
pub fn relative_error(
    u: (&DVector<f64>, &DVector<f64>),
    b: (&DVector<f64>, &DVector<f64>),
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
) -> f64 {
    let num = v_norm_sq(&(u.0 - b.0), &(u.1 - b.1), m1, m2);
    let den = v_norm_sq(b.0, b.1, m1, m2);
    (num / den).sqrt()
}

/// Mass matrices weighting the error norm, assembled once per mesh pair.
pub struct ErrorNorm {
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
}

impl ErrorNorm {
    pub fn build(s1: &Subdomain, s2: &Subdomain) -> ErrorNorm {
        let dd = |s: &Subdomain| assemble_mass(s).view((0, 0), (s.n_d(), s.n_d())).into_owned();
        ErrorNorm {
            m1: dd(s1),
            m2: dd(s2),
        }
    }
}

/// Largest time mismatch tolerated when lining a run up against its
/// benchmark. Matching grids agree to roundoff; anything else is a
/// configuration error.
const TIME_ALIGN_TOL: f64 = 1e-9;

/// Relative error of a coupled run against a single-domain benchmark at
/// every stored time of the run.
///
/// The benchmark must store every step on the same time grid, so each
/// stored time of the coupled run lines up with a benchmark column exactly.
pub fn error_series(
    res: &SimulationResult,
    bench: &Trajectory,
    s1: &Subdomain,
    s2: &Subdomain,
    norm: &ErrorNorm,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(res.n_stored());
    for (j, &t) in res.times.iter().enumerate() {
        let (k, dist) = bench
            .state_at(t)
            .ok_or_else(|| Error::DimensionMismatch("empty benchmark trajectory".into()))?;
        if dist > TIME_ALIGN_TOL {
            return Err(Error::DimensionMismatch(format!(
                "no benchmark state at t = {t:.6e} (closest is {dist:.3e} away)"
            )));
        }
        let full = bench.states.column(k).into_owned();
        let b1 = restrict_state(s1, &full);
        let b2 = restrict_state(s2, &full);
        let u1 = res.states[0].column(j).into_owned();
        let u2 = res.states[1].column(j).into_owned();
        out.push(relative_error((&u1, &u2), (&b1, &b2), &norm.m1, &norm.m2));
    }
    Ok(out)
}

/// Jump between the two interface traces of a coupled run at each stored
/// time, in the max norm.
pub fn trace_jump_series(res: &SimulationResult) -> Vec<f64> {
    (0..res.n_stored())
        .map(|j| (res.traces[0].column(j) - res.traces[1].column(j)).amax())
        .collect()
}
