//! End-to-end checks of the partitioned solver, one numbered criterion per
//! test. Each test prints a single PASS/FAIL line (visible with
//! `--nocapture`) before asserting, so a full run reads as a checklist.
//!
//! Criterion 8 integrates the full-size problem and is ignored by default;
//! run it with `cargo test --test acceptance -- --ignored`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rompart::assembly::{assemble_constraint, boundary_values};
use rompart::fom::{initial_dof_state, restrict_to_subdomains, run_single_domain, SnapshotSet};
use rompart::ivr::{build_coupled_system, run_coupled, Formulation, FormulationTag};
use rompart::metrics::{error_series, ErrorNorm};
use rompart::pod::{build_composite_basis, gamma_dim_rule, CompositeBasis, DimSelect, GammaSelect};
use rompart::problem::{manufactured_problem, solid_body_rotation_config, ProblemConfig};
use rompart::verify;

const C1_TOL: f64 = 1e-10;
const C2_TOL: f64 = 1e-12;
const C3_TOL: f64 = 1e-9;
const C4_RATIO: f64 = 10.0;
const C4_FF_LIMIT: f64 = 100.0;
const C5_RATIO: f64 = 1e3;
const C6_FLM_TOL: f64 = 1e-10;
const C6_RLM_TOL: f64 = 1e-9;
const C7_SLACK: f64 = 1.1;
const C7_FLOOR: f64 = 1e-10;
const C7_MATCH: f64 = 1e-8;

fn report(num: usize, name: &str, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("criterion {num}: {tag} {name} ({detail})");
    assert!(passed, "criterion {num} {name}: {detail}");
}

fn full_bases(cfg: &ProblemConfig, snaps: &(SnapshotSet, SnapshotSet)) -> [CompositeBasis; 2] {
    let build = |s: &SnapshotSet| {
        let d0 = s.x_interior.nrows().min(s.n_snapshots());
        let dg = s.x_gamma.nrows().min(s.n_snapshots());
        build_composite_basis(s, DimSelect::Explicit(d0), GammaSelect::Explicit(dg)).unwrap()
    };
    let _ = cfg;
    [build(&snaps.0), build(&snaps.1)]
}

fn truncated(full: &CompositeBasis, d0: usize) -> CompositeBasis {
    full.truncate(d0, gamma_dim_rule(d0, full.phi_gamma.nrows()))
        .unwrap()
}

#[test]
fn criterion_1_partitioned_matches_single_domain() {
    let started = Instant::now();
    let mut cfg = solid_body_rotation_config(1e-3, 1e-3, 16);
    cfg.t_final = 1.0;
    cfg.dt = 2e-3;

    let bench = run_single_domain(&cfg).unwrap();
    let res = run_coupled(&cfg, Formulation::new(FormulationTag::FfFlm), [None, None]).unwrap();
    let (s1, s2) = cfg.subdomains().unwrap();
    let norm = ErrorNorm::build(&s1, &s2);
    let eps = error_series(&res, &bench, &s1, &s2, &norm).unwrap();
    let worst = eps.iter().cloned().fold(0.0, f64::max);
    let wall = started.elapsed().as_secs_f64();

    report(
        1,
        "full coupling matches the single domain run",
        worst <= C1_TOL && wall < 5.0,
        &format!("max eps = {worst:.3e} over {} times, {wall:.1}s", eps.len()),
    );
}

#[test]
fn criterion_2_identity_bases_reproduce_full_coupling() {
    let started = Instant::now();
    let mut cfg = solid_body_rotation_config(1e-3, 1e-3, 16);
    cfg.t_final = 0.5;
    cfg.dt = 2e-3;
    let (s1, s2) = cfg.subdomains().unwrap();
    let ident = [
        CompositeBasis::identity(s1.n_gamma, s1.n_interior),
        CompositeBasis::identity(s2.n_gamma, s2.n_interior),
    ];

    let ff = run_coupled(&cfg, Formulation::new(FormulationTag::FfFlm), [None, None]).unwrap();
    let scale = ff.states[0].amax().max(ff.states[1].amax());

    let mut worst: f64 = 0.0;
    for tag in [
        FormulationTag::RrRlm,
        FormulationTag::FrFlm,
        FormulationTag::FrRlm,
    ] {
        let bases = [
            tag.reduced_side(0).then_some(&ident[0]),
            tag.reduced_side(1).then_some(&ident[1]),
        ];
        let res = run_coupled(&cfg, Formulation::new(tag), bases).unwrap();
        for i in 0..2 {
            worst = worst.max((&res.states[i] - &ff.states[i]).amax() / scale);
        }
    }
    let wall = started.elapsed().as_secs_f64();

    report(
        2,
        "identity bases reproduce the full coupling",
        worst <= C2_TOL && wall < 10.0,
        &format!("max relative state gap = {worst:.3e}, {wall:.1}s"),
    );
}

#[test]
fn criterion_3_schur_recovery_matches_monolithic_solve() {
    let started = Instant::now();
    let (mut cfg, _) = manufactured_problem("sin-decay").unwrap();
    cfg.nx = 4;
    cfg.ny = 4;
    cfg.dt = 1e-3;
    cfg.n_steps_override = Some(50);
    let (s1, s2) = cfg.subdomains().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let qbasis = |rng: &mut ChaCha8Rng, n: usize, d: usize| {
        DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() - 0.5)
            .qr()
            .q()
            .columns(0, d)
            .into_owned()
    };
    let mk = |rng: &mut ChaCha8Rng, sub: &rompart::mesh::Subdomain, full_gamma: bool| {
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

    let mut worst: f64 = 0.0;
    for tag in FormulationTag::ALL {
        // A truncated trace block under a full multiplier leaves the saddle
        // system singular, so that pairing keeps full trace blocks.
        let full_gamma = tag == FormulationTag::RrFlm;
        let b1 = mk(&mut rng, &s1, full_gamma);
        let b2 = mk(&mut rng, &s2, full_gamma);
        let bases = [
            tag.reduced_side(0).then_some(&b1),
            tag.reduced_side(1).then_some(&b2),
        ];
        let sys = build_coupled_system(&cfg, Formulation::new(tag), bases).unwrap();

        let mut u = [
            sys.sides[0].reduce(&initial_dof_state(&s1, &cfg)),
            sys.sides[1].reduce(&initial_dof_state(&s2, &cfg)),
        ];
        for k in 0..cfg.n_steps() {
            let t = cfg.time_at(k);
            let g = [
                boundary_values(&s1, &cfg.fields.dirichlet, t),
                boundary_values(&s2, &cfg.fields.dirichlet, t),
            ];
            let rate = cfg.fields.dirichlet_rate.as_ref().unwrap();
            let gdot = [
                boundary_values(&s1, rate, t),
                boundary_values(&s2, rate, t),
            ];
            let fast = sys.velocity(&cfg, t, &u, &g, &gdot).unwrap();
            let slow = sys.monolithic_velocity(&cfg, t, &u, &g, &gdot).unwrap();
            for i in 0..2 {
                let den = slow.udot[i].amax().max(1e-12);
                worst = worst.max((&fast.udot[i] - &slow.udot[i]).amax() / den);
            }
            let den = slow.lambda.amax().max(1e-12);
            worst = worst.max((&fast.lambda - &slow.lambda).amax() / den);
            for i in 0..2 {
                u[i] += cfg.dt * &fast.udot[i];
            }
        }
    }
    let wall = started.elapsed().as_secs_f64();

    report(
        3,
        "per-step recovery matches the monolithic solve",
        worst <= C3_TOL && wall < 5.0,
        &format!("max relative gap = {worst:.3e} over 50 steps x 5 formulations, {wall:.1}s"),
    );
}

#[test]
fn criterion_4_compatible_conditioning_is_flat() {
    let started = Instant::now();
    let compatible = [
        FormulationTag::FfFlm,
        FormulationTag::RrRlm,
        FormulationTag::FrFlm,
        FormulationTag::FrRlm,
    ];
    let dims = [5usize, 10, 20, 40];
    let mut conds: Vec<(FormulationTag, f64)> = Vec::new();

    for nx in [16usize, 32, 64] {
        let mut cfg = solid_body_rotation_config(1e-5, 1e-5, nx);
        cfg.n_steps_override = Some(150);
        let traj = run_single_domain(&cfg).unwrap();
        let (s1, s2) = cfg.subdomains().unwrap();
        let snaps = restrict_to_subdomains(&traj.states, &s1, &s2);
        let full = full_bases(&cfg, &snaps);

        for tag in compatible {
            let swept: &[usize] = if tag == FormulationTag::FfFlm {
                &[5]
            } else {
                &dims
            };
            for &d in swept {
                let b1 = truncated(&full[0], d);
                let b2 = truncated(&full[1], d);
                let bases = [
                    tag.reduced_side(0).then_some(&b1),
                    tag.reduced_side(1).then_some(&b2),
                ];
                let sys = build_coupled_system(&cfg, Formulation::new(tag), bases).unwrap();
                assert!(
                    sys.schur.spd,
                    "Cholesky must succeed for {tag} at nx = {nx}, d = {d}"
                );
                conds.push((tag, sys.schur.cond));
            }
        }
    }

    let mut worst_ratio: f64 = 0.0;
    for tag in compatible {
        let vals: Vec<f64> = conds
            .iter()
            .filter(|(t, _)| *t == tag)
            .map(|(_, c)| *c)
            .collect();
        let hi = vals.iter().cloned().fold(0.0, f64::max);
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        worst_ratio = worst_ratio.max(hi / lo);
    }
    let ff_max = conds
        .iter()
        .filter(|(t, _)| *t == FormulationTag::FfFlm)
        .map(|(_, c)| *c)
        .fold(0.0, f64::max);
    let wall = started.elapsed().as_secs_f64();

    report(
        4,
        "compatible pairings keep a flat Schur spectrum",
        worst_ratio <= C4_RATIO && ff_max <= C4_FF_LIMIT && wall < 180.0,
        &format!(
            "max cond spread = {worst_ratio:.2}, full-coupling cond max = {ff_max:.2}, {wall:.1}s"
        ),
    );
}

#[test]
fn criterion_5_full_multiplier_on_truncated_traces_degrades() {
    let mut cfg = solid_body_rotation_config(1e-5, 1e-5, 32);
    cfg.t_final = std::f64::consts::PI;
    cfg.dt = 3.368e-3;
    let traj = run_single_domain(&cfg).unwrap();
    let (s1, s2) = cfg.subdomains().unwrap();
    let snaps = restrict_to_subdomains(&traj.states, &s1, &s2);
    let full = full_bases(&cfg, &snaps);
    let n_gamma = s1.n_gamma;

    let cond_of = |tag: FormulationTag, d0: usize, dg: usize| {
        let b1 = full[0].truncate(d0, dg).unwrap();
        let b2 = full[1].truncate(d0, dg).unwrap();
        let sys = build_coupled_system(
            &cfg,
            Formulation::new(tag),
            [Some(&b1), Some(&b2)],
        )
        .unwrap();
        (sys.schur.cond, sys.schur.spd)
    };

    let d0 = 10;
    let dg = gamma_dim_rule(d0, n_gamma);
    assert!(dg < n_gamma);
    let (rlm_small, rlm_spd) = cond_of(FormulationTag::RrRlm, d0, dg);
    let (flm_small, _) = cond_of(FormulationTag::RrFlm, d0, dg);
    let (flm_full, full_spd) = cond_of(FormulationTag::RrFlm, d0, n_gamma);

    let degraded = flm_small >= C5_RATIO * rlm_small;
    let recovers = flm_full <= 1e3 && flm_full < flm_small && full_spd;

    report(
        5,
        "full multiplier over truncated traces is ill-posed",
        degraded && recovers && rlm_spd,
        &format!(
            "cond = {flm_small:.3e} vs {rlm_small:.3e} at d_gamma = {dg}; \
             {flm_full:.3e} once traces span the interface"
        ),
    );
}

#[test]
fn criterion_6_interface_enforcement() {
    let mut cfg = solid_body_rotation_config(1e-3, 1e-3, 16);
    cfg.dt = 1e-3;
    cfg.n_steps_override = Some(100);
    let traj = run_single_domain(&cfg).unwrap();
    let (s1, s2) = cfg.subdomains().unwrap();
    let snaps = restrict_to_subdomains(&traj.states, &s1, &s2);
    let full = full_bases(&cfg, &snaps);
    let d0 = 20;
    let b2 = truncated(&full[1], d0);
    let (c1, _) = assemble_constraint(&s1, &s2).unwrap();
    let g_gamma = c1.g_gamma;

    let zeros = [
        DVector::zeros(s1.n_dirichlet),
        DVector::zeros(s2.n_dirichlet),
    ];
    let mut worst_flm: f64 = 0.0;
    let mut worst_rlm: f64 = 0.0;

    for tag in [
        FormulationTag::FfFlm,
        FormulationTag::FrFlm,
        FormulationTag::FrRlm,
    ] {
        let b1 = truncated(&full[0], d0);
        let bases = [
            tag.reduced_side(0).then_some(&b1),
            tag.reduced_side(1).then_some(&b2),
        ];
        let sys = build_coupled_system(&cfg, Formulation::new(tag), bases).unwrap();
        let mut u = [
            sys.sides[0].reduce(&initial_dof_state(&s1, &cfg)),
            sys.sides[1].reduce(&initial_dof_state(&s2, &cfg)),
        ];
        for k in 0..cfg.n_steps() {
            let t = cfg.time_at(k);
            let v = sys.velocity(&cfg, t, &u, &zeros, &zeros).unwrap();
            let jump = sys.sides[0].trace(&v.udot[0]) - sys.sides[1].trace(&v.udot[1]);
            if tag == FormulationTag::FrRlm {
                worst_rlm = worst_rlm.max((b2.phi_gamma.transpose() * (&g_gamma * jump)).norm());
            } else {
                worst_flm = worst_flm.max(jump.amax());
            }
            for i in 0..2 {
                u[i] += cfg.dt * &v.udot[i];
            }
        }
    }

    report(
        6,
        "interface rates match pointwise under the full multiplier",
        worst_flm <= C6_FLM_TOL && worst_rlm <= C6_RLM_TOL,
        &format!(
            "max rate jump = {worst_flm:.3e}; projected defect = {worst_rlm:.3e} \
             under the reduced multiplier"
        ),
    );
}

#[test]
fn criterion_7_reproductive_error_decays_to_full_coupling() {
    let started = Instant::now();
    let mut cfg = solid_body_rotation_config(1e-5, 1e-5, 32);
    cfg.t_final = std::f64::consts::PI;
    cfg.dt = 3.368e-3;

    let bench = run_single_domain(&cfg).unwrap();
    let (s1, s2) = cfg.subdomains().unwrap();
    let norm = ErrorNorm::build(&s1, &s2);
    let snaps = restrict_to_subdomains(&bench.states, &s1, &s2);
    let full = full_bases(&cfg, &snaps);
    let full_rank = full[0].d0();

    let final_eps = |bases: [Option<&CompositeBasis>; 2], tag: FormulationTag| {
        let res = run_coupled(&cfg, Formulation::new(tag), bases).unwrap();
        *error_series(&res, &bench, &s1, &s2, &norm)
            .unwrap()
            .last()
            .unwrap()
    };
    let eps_ff = final_eps([None, None], FormulationTag::FfFlm);

    let sweep = [32usize, 64, 128, 256, full_rank];
    let mut eps = Vec::new();
    for &d in &sweep {
        let b1 = truncated(&full[0], d);
        let b2 = truncated(&full[1], d);
        eps.push(final_eps([Some(&b1), Some(&b2)], FormulationTag::RrRlm));
    }

    let monotone = eps
        .windows(2)
        .all(|w| w[1] <= C7_SLACK * w[0] + C7_FLOOR);
    let matches_ff = (eps[eps.len() - 1] - eps_ff).abs() <= C7_MATCH;
    let wall = started.elapsed().as_secs_f64();

    report(
        7,
        "reproductive error decays to the full-coupling level",
        monotone && matches_ff && wall < 300.0,
        &format!(
            "final eps {:?} over d {:?}, full coupling {eps_ff:.3e}, {wall:.1}s",
            eps.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            sweep
        ),
    );
}

#[test]
#[ignore = "full-size run, several minutes; execute with --ignored"]
fn criterion_8_energy_dimensions_at_full_size() {
    let started = Instant::now();

    // Reproductive basis: one rotation at the diffusion used online.
    let mut cfg = solid_body_rotation_config(1e-5, 1e-5, 64);
    cfg.t_final = 2.0 * std::f64::consts::PI;
    cfg.dt = 1.684e-3;
    let traj = run_single_domain(&cfg).unwrap();
    let (s1, s2) = cfg.subdomains().unwrap();
    let snaps = restrict_to_subdomains(&traj.states, &s1, &s2);

    let energy = |s: &SnapshotSet| {
        let b = build_composite_basis(
            s,
            DimSelect::Energy { delta: 0.01 },
            GammaSelect::Energy { delta: 0.01 },
        )
        .unwrap();
        (b.d0(), b.d_gamma())
    };
    let (d10, dg1) = energy(&snaps.0);
    let (d20, dg2) = energy(&snaps.1);

    let dims_ok = (21..=27).contains(&d10)
        && (18..=24).contains(&d20)
        && (4..=8).contains(&dg1)
        && (4..=8).contains(&dg2);

    // Predictive basis: train away from the online diffusion, then couple.
    let mut train_lo = solid_body_rotation_config(1e-8, 1e-8, 64);
    train_lo.t_final = 2.0 * std::f64::consts::PI;
    train_lo.dt = 1.684e-3;
    let mut train_hi = solid_body_rotation_config(1e-2, 1e-2, 64);
    train_hi.t_final = 2.0 * std::f64::consts::PI;
    train_hi.dt = 9.156e-4;

    let lo = run_single_domain(&train_lo).unwrap();
    let hi = run_single_domain(&train_hi).unwrap();
    let pool = |a: &SnapshotSet, b: &SnapshotSet| SnapshotSet {
        x_full: hcat(&a.x_full, &b.x_full),
        x_d: hcat(&a.x_d, &b.x_d),
        x_gamma: hcat(&a.x_gamma, &b.x_gamma),
        x_interior: hcat(&a.x_interior, &b.x_interior),
    };
    let lo_s = restrict_to_subdomains(&lo.states, &s1, &s2);
    let hi_s = restrict_to_subdomains(&hi.states, &s1, &s2);
    let pooled = (pool(&lo_s.0, &hi_s.0), pool(&lo_s.1, &hi_s.1));

    let d0 = 237;
    let basis = |s: &SnapshotSet| {
        build_composite_basis(
            s,
            DimSelect::Explicit(d0),
            GammaSelect::Explicit(gamma_dim_rule(d0, s.x_gamma.nrows())),
        )
        .unwrap()
    };
    let b1 = basis(&pooled.0);
    let b2 = basis(&pooled.1);

    let norm = ErrorNorm::build(&s1, &s2);
    let res = run_coupled(
        &cfg,
        Formulation::new(FormulationTag::RrRlm),
        [Some(&b1), Some(&b2)],
    )
    .unwrap();
    let eps = *error_series(&res, &traj, &s1, &s2, &norm)
        .unwrap()
        .last()
        .unwrap();
    let predictive_ok = eps <= 5e-2;
    let wall = started.elapsed().as_secs_f64();

    report(
        8,
        "energy criterion picks the expected dimensions at full size",
        dims_ok && predictive_ok,
        &format!(
            "interior dims ({d10}, {d20}), interface dims ({dg1}, {dg2}), \
             predictive eps = {eps:.3e} at d0 = {d0}, {wall:.0}s"
        ),
    );
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    m
}

#[test]
fn criterion_9_randomized_battery() {
    let results = verify::run_battery(42, 100);
    for r in &results {
        println!(
            "  {} {}: {}",
            if r.passed { "ok  " } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    let passed = verify::all_passed(&results);
    report(
        9,
        "randomized property battery",
        passed,
        &format!("{} checks at 100 trials, seed 42", results.len()),
    );
}
