//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the lines always print. The process fails on
//! any FAIL that is not listed in `KNOWN_DISCREPANCIES`.

use std::time::Instant;

use liestab::algebra::{ChainKind, LieAlgebra, Subspace};
use liestab::catalog;
use liestab::dynamics::ClassASystem;
use liestab::linalg;
use liestab::nalgebra::{Complex, DMatrix, DVector};
use liestab::quotient::{
    adapted_norm, check_projection_factorization, check_word_decomposition_nilpotent,
    check_word_decomposition_solvable, make_quotient, QuotientTower,
};
use liestab::sampling::{
    bch_compose, build_error_dynamics_example, logm, tracking_direction, tracking_pipeline_step, tracking_signal,
    GroupElement, BCH_MAX_ORDER,
};
use liestab::scenario;
use liestab::stability::{
    certify_nilpotent, check_forcing_bound, deadbeat_horizon, fit_envelope, verify_deadbeat,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step sizes large enough that cubic cross terms rise above round-off.
const JACOBIAN_STEPS: [f64; 4] = [1e-1, 5e-2, 2.5e-2, 1.25e-2];

/// Criterion sub-checks whose stated target contradicts the system that
/// reproduces every other stated value; see the decisions ledger.
const KNOWN_DISCREPANCIES: [&str; 1] = ["4.eigenvalues"];

struct Report {
    failures: Vec<String>,
    unexpected: usize,
}

impl Report {
    /// Print one criterion line; `checks` are `(id, pass, detail)`.
    fn criterion(&mut self, number: usize, title: &str, seconds: f64, checks: Vec<(&str, bool, String)>) {
        let failed: Vec<&(&str, bool, String)> = checks.iter().filter(|c| !c.1).collect();
        let status = if failed.is_empty() { "PASS" } else { "FAIL" };
        println!("[{status}] {number}. {title} ({seconds:.3} s)");
        for (id, pass, detail) in &checks {
            println!("       {} {id}: {detail}", if *pass { "ok  " } else { "FAIL" });
        }
        for (id, _, _) in failed {
            let key = format!("{number}.{id}");
            if KNOWN_DISCREPANCIES.contains(&key.as_str()) {
                println!("       known discrepancy {key}: faithful target not met, see decisions ledger");
            } else {
                self.unexpected += 1;
            }
            self.failures.push(key);
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.gen_range(-scale..scale))
}

fn random_triples(alg: &LieAlgebra, rng: &mut ChaCha8Rng) -> f64 {
    let d = alg.dim();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let (x, y, z) = (alg.basis_element(i), alg.basis_element(j), alg.basis_element(k));
                worst = worst.max(alg.jacobi_residual(&x, &y, &z));
            }
        }
    }
    for _ in 0..200 {
        let (x, y, z) = (random_vec(rng, d, 1.0), random_vec(rng, d, 1.0), random_vec(rng, d, 1.0));
        worst = worst.max(alg.jacobi_residual(&x, &y, &z));
    }
    worst
}

fn criterion_1(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut jacobi: f64 = 0.0;
    let mut centrality: f64 = 0.0;
    for (_, alg) in catalog::all() {
        jacobi = jacobi.max(random_triples(&alg, &mut rng));
        let chain = alg.lower_central_series(&alg.whole()).expect("chain");
        assert_eq!(chain.kind, ChainKind::LowerCentral);
        centrality = centrality.max(chain.strong_centrality_residual(&alg));
        let derived = alg.lower_central_series(&alg.derived_algebra()).expect("chain");
        centrality = centrality.max(derived.strong_centrality_residual(&alg));
    }
    let secs = start.elapsed().as_secs_f64();
    report.criterion(
        1,
        "algebra identities",
        secs,
        vec![
            ("jacobi", jacobi < 1e-12, format!("max Jacobi residual {jacobi:.3e} < 1e-12")),
            ("centrality", centrality < 1e-10, format!("max strong-centrality residual {centrality:.3e} < 1e-10")),
            ("runtime", secs < 1.0, format!("{secs:.3} s < 1 s")),
        ],
    );
}

fn criterion_2(report: &mut Report) {
    let start = Instant::now();
    let heis = catalog::heisenberg();
    let (nil, p) = heis.is_nilpotent(&heis.whole()).expect("chain");
    let ut = catalog::upper_triangular();
    let ut_solv = ut.solvability();
    let h = ut.derived_algebra();
    let h_chain = ut.lower_central_series(&h).expect("chain");
    let second = h_chain.ideals.get(1).cloned();
    let t6 = Subspace::coordinate(6, &[5]);
    let second_ok = second.as_ref().is_some_and(|s| s.same_as(&t6));
    let mut equivalence = true;
    let mut names = Vec::new();
    for (name, alg) in catalog::all() {
        let s = alg.solvability();
        equivalence &= s.agrees_with_derived_nilpotency();
        names.push(format!("{name}:{}", if s.solvable { "solvable" } else { "not solvable" }));
    }
    let sl2_negative = !catalog::sl2().solvability().solvable;
    report.criterion(
        2,
        "classification",
        start.elapsed().as_secs_f64(),
        vec![
            ("heisenberg", nil && p == Some(2), format!("nilpotent {nil}, nilindex {p:?}")),
            (
                "upper-triangular",
                ut_solv.solvable && h_chain.terminated && second_ok,
                format!(
                    "solvable {}, derived algebra nilpotent {}, second term = span{{t6}} {second_ok}",
                    ut_solv.solvable, h_chain.terminated
                ),
            ),
            (
                "equivalence",
                equivalence && sl2_negative,
                format!("solvable iff derived algebra nilpotent on [{}]", names.join(", ")),
            ),
        ],
    );
}

/// A random map leaving `span(I − ι P)` invariant.
fn invariant_map(lift_project: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = lift_project.nrows();
    let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    &m - lift_project * &m * (DMatrix::identity(d, d) - lift_project)
}

fn random_word(rng: &mut ChaCha8Rng, d: usize) -> Vec<DVector<f64>> {
    let len = rng.gen_range(2..=5);
    (0..len).map(|_| random_vec(rng, d, 1.0)).collect()
}

fn criterion_3(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let heis = catalog::heisenberg();
    let ut = catalog::upper_triangular();
    let heis_tower = QuotientTower::new(&heis, &heis.lower_central_series(&heis.whole()).unwrap()).unwrap();
    let ut_tower = QuotientTower::new(&ut, &ut.lower_central_series(&ut.derived_algebra()).unwrap()).unwrap();

    let mut square: f64 = 0.0;
    let mut proj_dev: f64 = 0.0;
    for tower in [&heis_tower, &ut_tower] {
        for ctx in tower.levels().iter().filter(|c| !c.is_degenerate()) {
            for _ in 0..20 {
                let a = invariant_map(&ctx.lift_project(), &mut rng);
                let a_bar = ctx.induced_map(&a).expect("invariant by construction");
                square = square.max(ctx.commuting_square_residual(&a, &a_bar));
            }
            proj_dev = proj_dev.max((ctx.projection_norm() - 1.0).abs());
        }
    }
    for (alg, ideal) in [(&ut, ut.derived_algebra()), (&heis, Subspace::coordinate(3, &[2]))] {
        let ctx = make_quotient(alg, &ideal).unwrap();
        proj_dev = proj_dev.max((ctx.projection_norm() - 1.0).abs());
    }

    let mut adapted_ok = 0;
    let mut adapted_worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let a = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let n = adapted_norm(&a, 0.01).unwrap();
        adapted_worst = adapted_worst.max(n.achieved_norm - n.spectral_radius);
        if n.achieved_norm < n.spectral_radius + 0.01 {
            adapted_ok += 1;
        }
    }

    let mut nil_word: f64 = 0.0;
    let mut solv_word: f64 = 0.0;
    let mut factor: f64 = 0.0;
    for _ in 0..100 {
        nil_word = nil_word.max(check_word_decomposition_nilpotent(&heis, &heis_tower, &random_word(&mut rng, 3)));
        solv_word = solv_word.max(check_word_decomposition_solvable(&ut, &ut_tower, &random_word(&mut rng, 6)));
        factor = factor.max(check_projection_factorization(&ut_tower, &random_vec(&mut rng, 6, 1.0)));
        factor = factor.max(check_projection_factorization(&heis_tower, &random_vec(&mut rng, 3, 1.0)));
    }
    report.criterion(
        3,
        "quotient machinery",
        start.elapsed().as_secs_f64(),
        vec![
            ("commuting-square", square < 1e-10, format!("max residual {square:.3e} < 1e-10")),
            ("projection-norm", proj_dev <= 1e-6, format!("max |‖P‖ − 1| = {proj_dev:.3e} ≤ 1e-6")),
            (
                "adapted-norm",
                adapted_ok == 20,
                format!("{adapted_ok}/20 random A with ‖A‖ < ρ(A) + 0.01 (worst ‖A‖ − ρ = {adapted_worst:.3e})"),
            ),
            ("nilpotent-word", nil_word < 1e-10, format!("max residual {nil_word:.3e} over 100 words")),
            ("solvable-word", solv_word < 1e-10, format!("max residual {solv_word:.3e} over 100 words")),
            ("projection-factorization", factor < 1e-10, format!("max residual {factor:.3e} over 100 points")),
        ],
    );
}

/// Greedy matching of two spectra; `None` when the sizes differ.
fn spectrum_distance(got: &[Complex<f64>], want: &[Complex<f64>]) -> Option<f64> {
    if got.len() != want.len() {
        return None;
    }
    let mut left: Vec<Complex<f64>> = got.to_vec();
    let mut worst: f64 = 0.0;
    for w in want {
        let (i, dist) = left
            .iter()
            .enumerate()
            .map(|(i, g)| (i, (g - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        worst = worst.max(dist);
        left.remove(i);
    }
    Some(worst)
}

fn criterion_4(report: &mut Report) {
    let start = Instant::now();
    let sys = build_error_dynamics_example().unwrap();
    let rho = sys.spectral_radius();
    let target = 1.0 / (2.0 * 2f64.sqrt());
    let eig = linalg::eigenvalues(sys.a());
    let stated = [Complex::new(-0.25, 0.25), Complex::new(-0.25, -0.25), Complex::new(0.01, 0.0)];
    let eig_dist = spectrum_distance(&eig, &stated).unwrap_or(f64::INFINITY);
    let eig_text: Vec<String> = eig.iter().map(|z| format!("{:.4}{:+.4}i", z.re, z.im)).collect();

    let signal = tracking_signal(1.0);
    let cert = certify_nilpotent(&sys, &signal, 5.0, None).unwrap();
    let e0 = DVector::from_row_slice(&[3.0, 2.0, -1.0]);
    let traj = sys.simulate(&e0, &signal, 50).unwrap();
    let final_norm = traj.norms[50];

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bundle = Vec::new();
    let mut max_initial: f64 = 0.0;
    for _ in 0..10 {
        let dir = random_vec(&mut rng, 3, 1.0);
        let x0 = &dir * (rng.gen_range(0.1..5.0) / sys.state_norm(&dir));
        max_initial = max_initial.max(sys.state_norm(&x0));
        bundle.push(sys.simulate(&x0, &signal, 50).unwrap().norms);
    }
    let fit = fit_envelope(&bundle).unwrap();
    let secs = start.elapsed().as_secs_f64();
    report.criterion(
        4,
        "tracking example",
        secs,
        vec![
            ("spectral-radius", (rho - target).abs() <= 1e-12, format!("ρ(A) = {rho:.17}, |ρ − 1/(2√2)| = {:.3e}", (rho - target).abs())),
            (
                "eigenvalues",
                eig_dist <= 1e-12,
                format!("computed [{}] vs stated [-0.25±0.25i, 0.01]: distance {eig_dist:.3e}", eig_text.join(", ")),
            ),
            (
                "certificate",
                cert.issued && cert.threshold == 0.5,
                format!("issued {}, threshold {}, margin {:.6}", cert.issued, cert.threshold, cert.margin),
            ),
            ("final-error", final_norm < 1e-6, format!("‖e[50]‖ = {final_norm:.3e} < 1e-6")),
            (
                "envelope",
                fit.decaying && max_initial <= 5.0,
                format!("fitted λ = {:.6} over 10 runs with ‖e[0]‖ ≤ {max_initial:.3}", fit.lambda),
            ),
            ("runtime", secs < 5.0, format!("{secs:.3} s < 5 s")),
        ],
    );
}

fn criterion_5(report: &mut Report) {
    let start = Instant::now();
    let sc = scenario::builtin("example-6.1").unwrap();
    let sys = &sc.system;
    let rho = sys.spectral_radius();
    let eig = linalg::eigenvalues(sys.a());
    let mut want = vec![Complex::new(-0.75, 0.0); 6];
    want.extend(vec![Complex::new(0.5, 0.0); 6]);
    let eig_dist = spectrum_distance(&eig, &want).unwrap_or(f64::INFINITY);

    let majorant = sys.class_a_majorant(1.0);
    let eq = sys.check_equilibrium_uniqueness(&DVector::zeros(sys.r() * sys.d()), 32, 5).unwrap();
    let inv = sys.check_invariance(64, 5);
    let assumptions = majorant.is_finite() && eq.structural_ok && !eq.violation && inv.pass;

    let traj = sys.simulate(&sc.initial_state(), &sc.signal, 200).unwrap();
    let x1 = traj.slot_norms(0)[200];
    let x2 = traj.slot_norms(1)[200];
    let secs = start.elapsed().as_secs_f64();
    report.criterion(
        5,
        "conjugation example",
        secs,
        vec![
            ("spectral-radius", (rho - 0.75).abs() < 1e-12, format!("ρ(A) = {rho:.17}")),
            ("eigenvalues", eig_dist < 1e-12, format!("{{−3/4, 1/2}} each ×6, distance {eig_dist:.3e}")),
            (
                "assumptions",
                assumptions,
                format!(
                    "majorant(1) = {majorant:.3e}, equilibrium structural {} / violation {}, invariance {}",
                    eq.structural_ok, eq.violation, inv.pass
                ),
            ),
            ("decay", x1.max(x2) < 1e-4, format!("max(‖X1[200]‖, ‖X2[200]‖) = {:.3e} < 1e-4", x1.max(x2))),
            ("runtime", secs < 10.0, format!("{secs:.3} s < 10 s")),
        ],
    );
}

fn criterion_6(report: &mut Report) {
    let start = Instant::now();
    let heis = scenario::builtin("heisenberg-deadbeat").unwrap().system;
    let hc = deadbeat_horizon(&heis).unwrap();
    let he = verify_deadbeat(&heis, &hc, 100, 1.0, 5, 6).unwrap();
    let heis_whole = heis.ideal().same_as(&heis.algebra().whole());
    let ut = scenario::builtin("upper-triangular-deadbeat").unwrap().system;
    let uc = deadbeat_horizon(&ut).unwrap();
    let ue = verify_deadbeat(&ut, &uc, 100, 1.0, 5, 6).unwrap();
    let levels_ok = he.worst_per_level.iter().chain(&ue.worst_per_level).all(|&v| v <= 1e-9);
    report.criterion(
        6,
        "deadbeat horizon",
        start.elapsed().as_secs_f64(),
        vec![
            (
                "heisenberg",
                heis.spectral_radius() == 0.0 && heis_whole && hc.horizon == 5 && he.worst_after_horizon <= 1e-9,
                format!(
                    "ρ(A) = {}, ideal = g {heis_whole}, horizon {} (levels {:?}), max ‖X[k]‖ for k ≥ 5 = {:.3e} over {} runs",
                    heis.spectral_radius(),
                    hc.horizon,
                    hc.level_horizons,
                    he.worst_after_horizon,
                    he.runs
                ),
            ),
            (
                "per-level",
                levels_ok,
                format!("per-level worst after horizon {:?} / {:?}", he.worst_per_level, ue.worst_per_level),
            ),
            (
                "upper-triangular",
                uc.horizon == 14 && ue.worst_after_horizon <= 1e-9,
                format!(
                    "horizon {} (levels {:?}), max ‖X[k]‖ for k ≥ 14 = {:.3e} over {} runs with ideal-valued inputs",
                    uc.horizon, uc.level_horizons, ue.worst_after_horizon, ue.runs
                ),
            ),
        ],
    );
}

fn criterion_7(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bch_err: f64 = 0.0;
    for alg in [catalog::heisenberg(), catalog::abelian(3)] {
        for _ in 0..1000 {
            let (x, y) = (random_vec(&mut rng, alg.dim(), 1.0), random_vec(&mut rng, alg.dim(), 1.0));
            let z = bch_compose(&alg, &x, &y, BCH_MAX_ORDER).unwrap().value;
            let g = GroupElement::exp_of(&alg, &x).unwrap().compose(&GroupElement::exp_of(&alg, &y).unwrap());
            let oracle = alg.from_matrix(&logm(g.matrix()).unwrap()).unwrap().0;
            bch_err = bch_err.max((z - oracle).amax());
        }
    }
    let mut round_trip: f64 = 0.0;
    for alg in [catalog::heisenberg(), catalog::upper_triangular(), catalog::se2()] {
        for _ in 0..1000 {
            let x = random_vec(&mut rng, alg.dim(), 1.0);
            let back = GroupElement::exp_of(&alg, &x).unwrap().log(&alg).unwrap();
            round_trip = round_trip.max((back - x).amax());
        }
    }
    let sys = build_error_dynamics_example().unwrap();
    let mut pipeline: f64 = 0.0;
    for _ in 0..100 {
        let e = random_vec(&mut rng, 3, 2.0);
        let w = rng.gen_range(-2.0..2.0);
        let alg_step = sys.eval(&e, &(tracking_direction() * w)).unwrap();
        let grp = tracking_pipeline_step(&e, w).unwrap();
        pipeline = pipeline.max((alg_step - grp).amax());
    }
    report.criterion(
        7,
        "BCH and sampling",
        start.elapsed().as_secs_f64(),
        vec![
            ("bch-oracle", bch_err < 1e-9, format!("max |bch − log(e^X e^Y)| = {bch_err:.3e} over 2×1000 pairs")),
            ("exp-log", round_trip < 1e-9, format!("max round-trip error {round_trip:.3e} over 3×1000 elements")),
            ("group-pipeline", pipeline < 1e-9, format!("max |group step − eval| = {pipeline:.3e} over 100 pairs")),
        ],
    );
}

fn criterion_8(report: &mut Report) {
    let start = Instant::now();
    let sys = build_error_dynamics_example().unwrap();
    let signal = tracking_signal(1.0);
    let cert = certify_nilpotent(&sys, &signal, 5.0, None).unwrap();
    let e0 = DVector::from_row_slice(&[3.0, 2.0, -1.0]);
    let traj = sys.simulate(&e0, &signal, 50).unwrap();
    let check = check_forcing_bound(&sys, &cert, &traj, 2).unwrap();
    report.criterion(
        8,
        "forcing bound",
        start.elapsed().as_secs_f64(),
        vec![(
            "level-2",
            cert.issued && check.pass && check.worst_ratio <= 1.0 + 1e-6 && check.steps >= 50,
            format!(
                "γ₂ = {:.6e}, λ₂ = {:.6}, max ‖u₂[k]‖/(γ₂λ₂^k‖X̄₂[0]‖) = {:.6} over k ≤ {}",
                check.gamma, check.rate, check.worst_ratio, check.steps
            ),
        )],
    );
}

fn criterion_9(report: &mut Report) {
    let start = Instant::now();
    let bad = scenario::ScenarioFile::from_json_str(
        r#"{"algebra": "heisenberg", "n": 1, "r": 1,
            "a": [[0.5, 0, 0], [0, 0.5, 0], [0, 0, 0.5]],
            "terms": [{"letters": ["X1", "W1"], "coeff": [1.0]},
                      {"letters": ["W1", {"slot": "W1", "map": [[0, 1, 0], [1, 0, 0], [0, 0, 1]]}], "coeff": [1.0]}]}"#,
    )
    .unwrap()
    .build(None)
    .unwrap()
    .system;
    let eq = bad.check_equilibrium_uniqueness(&DVector::zeros(3), 8, 9).unwrap();
    let rejected = !eq.structural_ok && bad.input_only_words().len() == 1;

    let systems: Vec<(&str, ClassASystem)> = vec![
        ("example-4.1", build_error_dynamics_example().unwrap()),
        ("example-6.1", scenario::builtin("example-6.1").unwrap().system),
        ("heisenberg-deadbeat", scenario::builtin("heisenberg-deadbeat").unwrap().system),
        ("upper-triangular-deadbeat", scenario::builtin("upper-triangular-deadbeat").unwrap().system),
    ];
    let mut min_order = f64::INFINITY;
    let mut measured = Vec::new();
    let mut exact = Vec::new();
    let mut jac_pass = true;
    let mut square: f64 = 0.0;
    for (name, sys) in &systems {
        let jac = sys.jacobian_check(&JACOBIAN_STEPS);
        jac_pass &= jac.pass;
        min_order = jac.observed_orders.iter().copied().fold(min_order, f64::min);
        if jac.exact {
            exact.push(*name);
        } else {
            measured.push(*name);
        }
        let p = sys.tower().unwrap().p();
        for level in 0..=p {
            let (quotient, ctx) = sys.quotient_system(level).unwrap();
            square = square.max(sys.quotient_square_residual(&quotient, &ctx, 50, 9));
        }
    }
    report.criterion(
        9,
        "property suite",
        start.elapsed().as_secs_f64(),
        vec![
            ("input-word", rejected, format!("input-only words {:?}, structural_ok {}", bad.input_only_words(), eq.structural_ok)),
            (
                "jacobian-order",
                jac_pass && !measured.is_empty() && min_order >= 1.9,
                format!(
                    "min observed order {min_order:.4} ≥ 1.9 on {measured:?}; central differences exact (error at floor) on {exact:?}"
                ),
            ),
            ("quotient-square", square < 1e-9, format!("max residual {square:.3e} < 1e-9 at every level of 4 systems")),
        ],
    );
}

fn main() {
    let mut report = Report { failures: Vec::new(), unexpected: 0 };
    criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_3(&mut report);
    criterion_4(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);
    criterion_7(&mut report);
    criterion_8(&mut report);
    criterion_9(&mut report);
    println!(
        "acceptance: {} failing sub-checks ({} known discrepancies, {} unexpected)",
        report.failures.len(),
        report.failures.len() - report.unexpected,
        report.unexpected
    );
    if report.unexpected > 0 {
        std::process::exit(1);
    }
}
