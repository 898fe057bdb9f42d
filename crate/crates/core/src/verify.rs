//! Seeded self-check battery over the numerical kernels.
//!
//! Every check draws its cases from a counter-mode generator, so a battery
//! is reproducible from its seed alone. Randomized checks aggregate the
//! worst case over all trials; structural checks (determinism, exact
//! reductions) run once.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ivr::{build_coupled_system, run_coupled, Formulation, FormulationTag};
use crate::metrics::relative_error;
use crate::numerics::{svd_thin, SpdFactorization};
use crate::pod::{select_dim, snapshot_energy, CompositeBasis};
use crate::problem::{manufactured_problem, solid_body_rotation_config};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

/// Runs the whole battery. `trials` scales the randomized checks.
pub fn run_battery(seed: u64, trials: usize) -> Vec<CheckResult> {
    vec![
        svd_invariants(seed, trials),
        spd_solve_roundtrip(seed ^ 0x51ab, trials),
        energy_selection(seed ^ 0xe4e4, trials),
        truncation_energy(seed ^ 0x70d0, trials),
        error_norm_invariance(seed ^ 0x0dd5, trials),
        coupled_determinism(),
        full_order_coupling_matches_benchmark(),
        identity_reduction_is_exact(),
        multiplier_recovery_oracle(seed ^ 0x970c, trials.clamp(1, 20)),
    ]
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.5)
}

fn svd_invariants(seed: u64, trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let rows = rng.random_range(1..=12);
        let cols = rng.random_range(1..=12);
        let a = rand_matrix(&mut rng, rows, cols);
        let svd = match svd_thin(&a) {
            Ok(s) => s,
            Err(e) => return fail("svd_invariants", e.to_string()),
        };
        let k = svd.sigma.len();
        let scale = svd.sigma.max().max(1e-300);
        worst = worst.max((svd.reconstruct() - &a).amax() / scale);
        worst = worst
            .max((svd.u.transpose() * &svd.u - DMatrix::identity(k, k)).amax());
        worst = worst
            .max((svd.v.transpose() * &svd.v - DMatrix::identity(k, k)).amax());
        for w in svd.sigma.as_slice().windows(2) {
            if w[1] > w[0] {
                return fail("svd_invariants", format!("unsorted spectrum {w:?}"));
            }
        }
    }
    graded("svd_invariants", worst, 1e-12, trials)
}

fn spd_solve_roundtrip(seed: u64, trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = rng.random_range(1..=15);
        let b = rand_matrix(&mut rng, n, n);
        let a = &b * b.transpose() + DMatrix::identity(n, n) * n as f64;
        let x_true = DVector::from_fn(n, |i, _| (i as f64 * 0.7).cos());
        let rhs = &a * &x_true;
        let fact = match SpdFactorization::new(&a) {
            Ok(f) => f,
            Err(e) => return fail("spd_solve_roundtrip", e.to_string()),
        };
        worst = worst.max((fact.solve(&rhs) - &x_true).amax());
    }
    graded("spd_solve_roundtrip", worst, 1e-10, trials)
}

fn energy_selection(seed: u64, trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let n = rng.random_range(1..=25);
        let mut sigma: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0 + 1e-8).collect();
        sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let delta = rng.random::<f64>() * 0.9 + 1e-9;
        let d = select_dim(&sigma, delta);
        if snapshot_energy(&sigma, d) < 1.0 - delta - 1e-12 {
            return fail(
                "energy_selection",
                format!("trial {t}: d = {d} misses the target"),
            );
        }
        if d > 1 && snapshot_energy(&sigma, d - 1) >= 1.0 - delta + 1e-12 {
            return fail("energy_selection", format!("trial {t}: d = {d} not minimal"));
        }
    }
    pass("energy_selection", format!("{trials} spectra"))
}

fn truncation_energy(seed: u64, trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = rng.random_range(2..=10);
        let r = rng.random_range(2..=14);
        let a = rand_matrix(&mut rng, n, r);
        let svd = match svd_thin(&a) {
            Ok(s) => s,
            Err(e) => return fail("truncation_energy", e.to_string()),
        };
        let k = svd.sigma.len();
        let d = rng.random_range(1..=k);
        let phi = svd.u.columns(0, d);
        let err = &a - &phi * (phi.transpose() * &a);
        let tail: f64 = svd.sigma.as_slice()[d..].iter().map(|s| s * s).sum();
        let total: f64 = svd.sigma.as_slice().iter().map(|s| s * s).sum();
        worst = worst.max((err.norm_squared() - tail).abs() / total.max(1e-300));
    }
    graded("truncation_energy", worst, 1e-12, trials)
}

fn error_norm_invariance(seed: u64, trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n1 = rng.random_range(1..=8);
        let n2 = rng.random_range(1..=8);
        let sq1 = rand_matrix(&mut rng, n1, n1);
        let sq2 = rand_matrix(&mut rng, n2, n2);
        let m1 = &sq1 * sq1.transpose() + DMatrix::identity(n1, n1);
        let m2 = &sq2 * sq2.transpose() + DMatrix::identity(n2, n2);
        let b1 = DVector::from_fn(n1, |i, _| 1.0 + (i as f64).sin());
        let b2 = DVector::from_fn(n2, |i, _| 1.0 + (i as f64).cos());
        let u1 = &b1 + rand_matrix(&mut rng, n1, 1).column(0).into_owned();
        let u2 = &b2 + rand_matrix(&mut rng, n2, 1).column(0).into_owned();
        let e = relative_error((&u1, &u2), (&b1, &b2), &m1, &m2);
        let c = 1.0 + rng.random::<f64>() * 99.0;
        let e_scaled = relative_error(
            (&(c * &u1), &(c * &u2)),
            (&(c * &b1), &(c * &b2)),
            &m1,
            &m2,
        );
        worst = worst.max((e - e_scaled).abs() / e.max(1e-300));
    }
    graded("error_norm_invariance", worst, 1e-12, trials)
}

fn tiny_rotation() -> crate::problem::ProblemConfig {
    let mut cfg = solid_body_rotation_config(1e-3, 1e-3, 8);
    cfg.t_final = 0.04;
    cfg.dt = 2e-3;
    cfg
}

fn coupled_determinism() -> CheckResult {
    let cfg = tiny_rotation();
    let form = Formulation::new(FormulationTag::FfFlm);
    let a = match run_coupled(&cfg, form, [None, None]) {
        Ok(r) => r,
        Err(e) => return fail("coupled_determinism", e.to_string()),
    };
    let b = match run_coupled(&cfg, form, [None, None]) {
        Ok(r) => r,
        Err(e) => return fail("coupled_determinism", e.to_string()),
    };
    for i in 0..2 {
        if a.states[i] != b.states[i] {
            return fail("coupled_determinism", format!("side {i} states differ"));
        }
    }
    if a.lambda != b.lambda {
        return fail("coupled_determinism", "multiplier history differs".into());
    }
    pass("coupled_determinism", "two runs bitwise identical".into())
}

fn full_order_coupling_matches_benchmark() -> CheckResult {
    let cfg = tiny_rotation();
    let bench = match crate::fom::run_single_domain(&cfg) {
        Ok(t) => t,
        Err(e) => return fail("full_order_coupling", e.to_string()),
    };
    let res = match run_coupled(&cfg, Formulation::new(FormulationTag::FfFlm), [None, None]) {
        Ok(r) => r,
        Err(e) => return fail("full_order_coupling", e.to_string()),
    };
    let (s1, s2) = match cfg.subdomains() {
        Ok(s) => s,
        Err(e) => return fail("full_order_coupling", e.to_string()),
    };
    let norm = crate::metrics::ErrorNorm::build(&s1, &s2);
    match crate::metrics::error_series(&res, &bench, &s1, &s2, &norm) {
        Ok(eps) => {
            let worst = eps.iter().copied().fold(0.0, f64::max);
            graded("full_order_coupling", worst, 1e-10, 1)
        }
        Err(e) => fail("full_order_coupling", e.to_string()),
    }
}

fn identity_reduction_is_exact() -> CheckResult {
    let cfg = tiny_rotation();
    let ff = match run_coupled(&cfg, Formulation::new(FormulationTag::FfFlm), [None, None]) {
        Ok(r) => r,
        Err(e) => return fail("identity_reduction", e.to_string()),
    };
    let (s1, s2) = cfg.subdomains().unwrap();
    let b1 = CompositeBasis::identity(s1.n_gamma, s1.n_interior);
    let b2 = CompositeBasis::identity(s2.n_gamma, s2.n_interior);
    let rr = match run_coupled(
        &cfg,
        Formulation::new(FormulationTag::RrRlm),
        [Some(&b1), Some(&b2)],
    ) {
        Ok(r) => r,
        Err(e) => return fail("identity_reduction", e.to_string()),
    };
    let j = ff.n_stored() - 1;
    let worst = (0..2)
        .map(|i| (ff.states[i].column(j) - rr.states[i].column(j)).amax())
        .fold(0.0, f64::max);
    graded("identity_reduction", worst, 1e-12, 1)
}

fn multiplier_recovery_oracle(seed: u64, trials: usize) -> CheckResult {
    let (mut cfg, _) = match manufactured_problem("sin-decay") {
        Ok(c) => c,
        Err(e) => return fail("multiplier_recovery", e.to_string()),
    };
    cfg.nx = 4;
    cfg.ny = 4;
    let (s1, s2) = cfg.subdomains().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let qbasis = |rng: &mut ChaCha8Rng, n: usize, d: usize| {
            rand_matrix(rng, n, d).qr().q().columns(0, d).into_owned()
        };
        let mk = |rng: &mut ChaCha8Rng, sub: &crate::mesh::Subdomain, full_gamma: bool| {
            let d0 = 1 + rng.random_range(0..sub.n_interior);
            let dg = if full_gamma {
                sub.n_gamma
            } else {
                1 + rng.random_range(0..sub.n_gamma)
            };
            CompositeBasis {
                phi_interior: qbasis(rng, sub.n_interior, d0),
                phi_gamma: qbasis(rng, sub.n_gamma, dg),
                sigma_interior: vec![1.0; d0],
                sigma_gamma: vec![1.0; dg],
            }
        };
        let b1 = mk(&mut rng, &s1, false);
        let b2 = mk(&mut rng, &s2, false);
        // Truncated trace blocks leave the full multiplier underdetermined in
        // RR-fLM, so that pairing is compared on full trace blocks where the
        // saddle system is still nonsingular.
        let f1 = mk(&mut rng, &s1, true);
        let f2 = mk(&mut rng, &s2, true);
        for tag in FormulationTag::ALL {
            let (r1, r2) = if tag == FormulationTag::RrFlm {
                (&f1, &f2)
            } else {
                (&b1, &b2)
            };
            let bases: [Option<&CompositeBasis>; 2] = [
                tag.reduced_side(0).then_some(r1),
                tag.reduced_side(1).then_some(r2),
            ];
            let sys = match build_coupled_system(&cfg, Formulation::new(tag), bases) {
                Ok(s) => s,
                Err(e) => return fail("multiplier_recovery", format!("{tag}: {e}")),
            };
            let u = [
                DVector::from_fn(sys.sides[0].n_hat(), |_, _| rng.random::<f64>() - 0.5),
                DVector::from_fn(sys.sides[1].n_hat(), |_, _| rng.random::<f64>() - 0.5),
            ];
            let t = rng.random::<f64>() * 0.1;
            let g = [
                crate::assembly::boundary_values(&s1, &cfg.fields.dirichlet, t),
                crate::assembly::boundary_values(&s2, &cfg.fields.dirichlet, t),
            ];
            let gdot = [
                crate::assembly::boundary_values(&s1, cfg.fields.dirichlet_rate.as_ref().unwrap(), t),
                crate::assembly::boundary_values(&s2, cfg.fields.dirichlet_rate.as_ref().unwrap(), t),
            ];
            let fast = match sys.velocity(&cfg, t, &u, &g, &gdot) {
                Ok(v) => v,
                Err(e) => return fail("multiplier_recovery", format!("{tag}: {e}")),
            };
            let slow = match sys.monolithic_velocity(&cfg, t, &u, &g, &gdot) {
                Ok(v) => v,
                Err(e) => return fail("multiplier_recovery", format!("{tag}: {e}")),
            };
            for i in 0..2 {
                worst = worst.max((&fast.udot[i] - &slow.udot[i]).amax());
            }
            worst = worst.max((&fast.lambda - &slow.lambda).amax());
        }
    }
    graded("multiplier_recovery", worst, 1e-9, trials)
}

fn pass(name: &'static str, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed: true,
        detail,
    }
}

fn fail(name: &'static str, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed: false,
        detail,
    }
}

fn graded(name: &'static str, worst: f64, tol: f64, trials: usize) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e} (tol {tol:.0e}, {trials} trials)"),
    }
}
