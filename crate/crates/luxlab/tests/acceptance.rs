//! End-to-end acceptance gates. Each test exercises one headline claim at
//! its full working scale, prints a single pass/fail line with the
//! measured quantity, its pinned tolerance, and the elapsed time against
//! the budget, and then asserts.

use std::time::Instant;

use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;

use luxlab::carleson::{carleson_constant, sequence_from_sparse, SparsePayload};
use luxlab::dyadic::{cover_cube, enumerate_cubes, validate_sparse, DyadicCube, Shift, Window};
use luxlab::field::{make_field, FieldGenerator, FieldKind, MeshField};
use luxlab::growth::{GrowthFunction, INVERSE_TOL};
use luxlab::harness::{run_experiment, ExperimentConfig};
use luxlab::maximal::{
    fractional_multilinear_maximal, log_maximal, multilinear_weighted_maximal, sparse_decompose,
    CubeSet,
};
use luxlab::orlicz::{luxemburg_norm, modular, NORM_TOL};
use luxlab::weights::{muckenhoupt_constant, pair_class_constant, reverse_holder_check, ClassKind,
    WeightSystem};

fn lognormal(w: &Window, res: u32, seed: u64, rough: f64, kind: FieldKind) -> MeshField {
    make_field(
        w,
        res,
        kind,
        &FieldGenerator::Lognormal {
            seed,
            roughness: rough,
        },
    )
    .unwrap()
}

fn indicator_of(cube: &DyadicCube, w: &Window, res: u32) -> MeshField {
    let side = cube.side();
    make_field(
        w,
        res,
        FieldKind::Function,
        &FieldGenerator::Indicator {
            corner: cube.corner(),
            sides: vec![side; w.d()],
        },
    )
    .unwrap()
}

fn random_standard_cube(rng: &mut ChaCha8Rng, d: usize, max_depth: i32) -> DyadicCube {
    let depth = rng.gen_range(0..=max_depth);
    let per = 1i64 << depth;
    let index: Vec<i64> = (0..d).map(|_| rng.gen_range(0..per)).collect();
    DyadicCube::new(Shift::standard(d), -depth, index).unwrap()
}

fn report(name: &str, pass: bool, detail: &str, elapsed: f64, budget: f64) -> bool {
    let verdict = if pass && elapsed < budget { "PASS" } else { "FAIL" };
    println!("[{verdict}] {name}: {detail}; {elapsed:.1}s of {budget:.0}s budget");
    pass && elapsed < budget
}

#[test]
fn indicator_norms_invert_the_growth_function() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC_0001);
    let w = Window::unit(1);
    let res = 8u32;
    let mut max_dev = 0.0f64;
    for _ in 0..100 {
        let phi = if rng.gen_bool(0.6) {
            GrowthFunction::power(rng.gen_range(1.1..4.0)).unwrap()
        } else {
            GrowthFunction::power_log(rng.gen_range(1.0..2.5), rng.gen_range(0.2..1.5)).unwrap()
        };
        let sigma = lognormal(&w, res, rng.gen(), 0.6, FieldKind::Weight);
        let cube = random_standard_cube(&mut rng, 1, res as i32);
        let chi = indicator_of(&cube, &w, res);
        let mass = sigma.integrate(&cube).unwrap();
        let norm = luxemburg_norm(&phi, &chi, &sigma, NORM_TOL).unwrap().value;
        let inverse = phi.inverse(1.0 / mass, INVERSE_TOL).unwrap();
        max_dev = max_dev.max((norm * inverse - 1.0).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "indicator-norm identity",
        max_dev <= 1e-8,
        &format!("max |norm·inverse − 1| = {max_dev:.2e} (tol 1e-8, 100 draws)"),
        elapsed,
        10.0,
    );
    assert!(ok);
}

#[test]
fn weak_type_supremum_stays_below_the_linear_budget() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut pass = true;
    for n in [1usize, 2] {
        let cfg = ExperimentConfig::from_ini(&format!(
            "[experiment]\ntheorem = WEAK_TYPE\ntrials = 25\nlevel = 8\nseed = 210\nn = {n}\n"
        ))
        .unwrap();
        let rep = run_experiment(&cfg).unwrap();
        pass &= rep.is_bounded();
        for rec in &rep.trials {
            worst = worst.max(rec.ratio);
            pass &= rec.ratio <= 1.0 + 1e-9;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "weak-type budget",
        pass,
        &format!("sup Φ(λ)·σ(Eλ)/n = {worst:.12} over 50 instances (tol 1+1e-9)"),
        elapsed,
        30.0,
    );
    assert!(ok);
}

#[test]
fn every_cube_has_a_six_fold_grid_cover() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC_0003);
    let mut covered = 0usize;
    let mut worst_factor = 0.0f64;
    for trial in 0..1000 {
        let d = 1 + trial % 2;
        let side = (rng.gen_range(-8.0..0.0) as f64).exp2();
        let corner: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, cube) = cover_cube(&corner, side).unwrap();
        let r_corner = cube.corner();
        let r_side = cube.side();
        let contains = (0..d)
            .all(|j| r_corner[j] <= corner[j] && corner[j] + side <= r_corner[j] + r_side);
        if contains && r_side <= 6.0 * side * (1.0 + 1e-12) {
            covered += 1;
        }
        worst_factor = worst_factor.max(r_side / side);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "three-lattice cover",
        covered == 1000,
        &format!("{covered}/1000 covered, worst side factor {worst_factor:.3} (cap 6)"),
        elapsed,
        5.0,
    );
    assert!(ok);
}

#[test]
fn sparse_decompositions_validate_their_invariants() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC_0004);
    let w = Window::unit(1);
    let res = 6u32;
    let mut all_pass = true;
    let mut worst_packing = 0.0f64;
    for trial in 0..50 {
        let n = 1 + trial % 2;
        let sigmas: Vec<MeshField> = (0..n)
            .map(|_| lognormal(&w, res, rng.gen(), 0.6, FieldKind::Weight))
            .collect();
        let fs: Vec<MeshField> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    lognormal(&w, res, rng.gen(), 0.8, FieldKind::Function)
                } else {
                    make_field(
                        &w,
                        res,
                        FieldKind::Function,
                        &FieldGenerator::PowerSingularity {
                            center: vec![rng.gen_range(0.0..1.0)],
                            gamma: -0.3,
                        },
                    )
                    .unwrap()
                }
            })
            .collect();
        let sigma_refs: Vec<&MeshField> = sigmas.iter().collect();
        let f_refs: Vec<&MeshField> = fs.iter().collect();
        let family =
            sparse_decompose(&sigma_refs, &f_refs, 2.0, &Shift::standard(1), &w).unwrap();
        let validation = validate_sparse(&family).unwrap();
        all_pass &= validation.pass;
        worst_packing = worst_packing.max(validation.measured_packing);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "sparse validity",
        all_pass && worst_packing <= 0.5,
        &format!(
            "all invariants on 50 decompositions, worst packing {worst_packing:.3} (cap 0.5)"
        ),
        elapsed,
        60.0,
    );
    assert!(ok);
}

#[test]
fn grid_maximals_dominate_the_aligned_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC_0005);
    let mut worst_margin = 0.0f64;
    let mut pass = true;
    for trial in 0..20 {
        let d = if trial < 10 { 1 } else { 2 };
        let res = if d == 1 { 8 } else { 5 };
        let n = 1 + trial % 2;
        let alpha = if trial % 4 < 2 { 0.0 } else { d as f64 / 2.0 };
        let w = Window::unit(d);
        let inputs: Vec<MeshField> = (0..n)
            .map(|_| lognormal(&w, res, rng.gen(), 0.5, FieldKind::Function))
            .collect();
        let refs: Vec<&MeshField> = inputs.iter().collect();
        let aligned =
            fractional_multilinear_maximal(&refs, alpha, &CubeSet::AllMeshAligned, &w).unwrap();
        let singles: Vec<Vec<f64>> = Shift::all(d)
            .into_iter()
            .map(|beta| {
                fractional_multilinear_maximal(&refs, alpha, &CubeSet::SingleGrid(beta), &w)
                    .unwrap()
                    .fine()
                    .values()
                    .to_vec()
            })
            .collect();
        let factor = 6f64.powf(n as f64 * d as f64 - alpha);
        for (cell, &value) in aligned.fine().values().iter().enumerate() {
            let grid_sum: f64 = singles.iter().map(|s| s[cell]).sum();
            let bound = factor * grid_sum;
            pass &= value <= bound * (1.0 + 1e-9);
            if bound > 0.0 {
                worst_margin = worst_margin.max(value / bound);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "grid domination",
        pass,
        &format!("aligned/6^(nd−α)·Σgrids peak ratio {worst_margin:.3} (must stay ≤ 1)"),
        elapsed,
        120.0,
    );
    assert!(ok);
}

#[test]
fn own_measure_payloads_are_carleson_with_unit_budget() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC_0006);
    let w = Window::unit(1);
    let res = 6u32;
    let identity = GrowthFunction::power(1.0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let sigma = lognormal(&w, res, rng.gen(), 0.7, FieldKind::Weight);
        let f = lognormal(&w, res, rng.gen(), 0.9, FieldKind::Function);
        let family = sparse_decompose(&[&sigma], &[&f], 2.0, &Shift::standard(1), &w).unwrap();
        let seq = sequence_from_sparse(&family, &SparsePayload::WeightE(&sigma)).unwrap();
        let constant = carleson_constant(&seq, &sigma, &identity, &w).unwrap().value;
        worst = worst.max(constant);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "carleson-from-sparse",
        worst <= 1.0 + 1e-12,
        &format!("max Λ̂ = {worst:.12} over 20 families (tol 1+1e-12)"),
        elapsed,
        20.0,
    );
    assert!(ok);
}

#[test]
fn power_families_satisfy_reverse_holder_exactly() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC_0007);
    let w = Window::unit(1);
    let res = 6u32;
    let mut worst_upper = 0.0f64;
    let mut worst_unit_dev = 0.0f64;
    for trial in 0..15 {
        let n = if trial < 5 { 1 } else { 2 };
        let sigmas: Vec<MeshField> = (0..n)
            .map(|_| lognormal(&w, res, rng.gen(), 0.6, FieldKind::Weight))
            .collect();
        let phis: Vec<GrowthFunction> = (0..n)
            .map(|_| GrowthFunction::power(rng.gen_range(1.2..3.5)).unwrap())
            .collect();
        let ws = WeightSystem::new(sigmas, phis).unwrap();
        let check = reverse_holder_check(&ws, &CubeSet::AllGrids, &w).unwrap();
        worst_upper = worst_upper.max(check.upper);
        if n == 1 {
            worst_unit_dev = worst_unit_dev
                .max((check.upper - 1.0).abs())
                .max((check.lower - 1.0).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "reverse-Hölder power case",
        worst_upper <= 1.0 + 1e-9 && worst_unit_dev <= 1e-9,
        &format!(
            "max product {worst_upper:.12} (tol 1+1e-9); single-weight deviation \
             {worst_unit_dev:.2e}"
        ),
        elapsed,
        20.0,
    );
    assert!(ok);
}

#[test]
fn embedding_sums_track_the_sequence_constant_under_refinement() {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_ini(
        "[experiment]\ntheorem = CARLESON_EMBED\ntrials = 50\nlevel = 6\nseed = 808\n",
    )
    .unwrap();
    let rep = run_experiment(&cfg).unwrap();
    let finite = rep
        .trials
        .iter()
        .all(|r| r.ratio.is_finite() && r.lhs.is_finite() && r.rhs.is_finite());
    let refinement = &rep.summary.refinement;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "carleson embedding stability",
        finite && rep.is_bounded() && !refinement.flagged,
        &format!(
            "max ratio {:.4e}, refinement factor {:.3} from L=6 to L=8 (cap 2)",
            rep.summary.max_ratio, refinement.factor
        ),
        elapsed,
        120.0,
    );
    assert!(ok);
}

#[test]
fn sawyer_testing_conditions_bound_both_sides() {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_ini(
        "[experiment]\ntheorem = SAWYER_PQ\ntrials = 20\nlevel = 8\nseed = 11\nn = 2\n",
    )
    .unwrap();
    let rep = run_experiment(&cfg).unwrap();
    let refinement = &rep.summary.refinement;
    let floor = rep.summary.min_lower_ratio.unwrap_or(f64::NAN);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "two-sided testing target",
        rep.is_bounded() && !refinement.flagged && floor >= 0.9,
        &format!(
            "sufficiency max ratio {:.4e} (refinement factor {:.3}), indicator floor \
             {floor:.12} (must be ≥ 0.9)",
            rep.summary.max_ratio, refinement.factor
        ),
        elapsed,
        300.0,
    );
    assert!(ok);
}

#[test]
fn dyadic_maximal_modulars_respect_the_conjugate_power() {
    let start = Instant::now();
    // Refinement-stable modular ratios across the power family.
    let mut pass = true;
    let mut worst = 0.0f64;
    for p in [1.5f64, 2.0, 3.0] {
        let cfg = ExperimentConfig::from_ini(&format!(
            "[experiment]\ntheorem = ORLICZ_MAX_BOUND\ntrials = 50\nlevel = 6\nseed = 310\n\
             [growth]\nphi1 = power:p={p}\n"
        ))
        .unwrap();
        let rep = run_experiment(&cfg).unwrap();
        pass &= rep.is_bounded() && !rep.summary.refinement.flagged;
        pass &= rep.trials.iter().all(|r| r.ratio.is_finite());
        worst = worst.max(rep.summary.max_ratio / (p / (p - 1.0)).powf(p));
    }
    // Independent square-growth oracle on a small flat-weight mesh: the
    // sharp conjugate-power bound, with the library value cross-checked
    // against a direct scan over every standard cube.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC_000A);
    let w = Window::unit(1);
    let res = 5u32;
    let square = GrowthFunction::power(2.0).unwrap();
    let lebesgue = make_field(&w, res, FieldKind::Weight, &FieldGenerator::Constant(1.0)).unwrap();
    let mut oracle_worst = 0.0f64;
    for _ in 0..20 {
        let f = if rng.gen_bool(0.5) {
            lognormal(&w, res, rng.gen(), 1.0, FieldKind::Function)
        } else {
            make_field(
                &w,
                res,
                FieldKind::Function,
                &FieldGenerator::PowerSingularity {
                    center: vec![rng.gen_range(0.0..1.0)],
                    gamma: -0.4,
                },
            )
            .unwrap()
        };
        let lib = multilinear_weighted_maximal(
            &[&lebesgue],
            &[&f],
            &CubeSet::SingleGrid(Shift::standard(1)),
            &w,
        )
        .unwrap()
        .fine()
        .sample_to_mesh(&w, res)
        .unwrap();
        // Direct scan: for every cell, the best plain average among the
        // standard cubes containing it.
        let cells = 1usize << res;
        let mut direct = vec![0.0f64; cells];
        for depth in 0..=res as i32 {
            for cube in enumerate_cubes(&w, &Shift::standard(1), -depth, -depth).unwrap() {
                let avg = f.integrate(&cube).unwrap().abs() / cube.volume();
                let span = cells >> depth;
                let from = cube.index[0] as usize * span;
                for slot in direct.iter_mut().skip(from).take(span) {
                    *slot = slot.max(avg);
                }
            }
        }
        for (cell, &value) in lib.values().iter().enumerate() {
            pass &= (value - direct[cell]).abs() <= 1e-12 * (direct[cell] + 1.0);
        }
        let ratio = modular(&square, &lib, &lebesgue).unwrap()
            / modular(&square, &f, &lebesgue).unwrap();
        oracle_worst = oracle_worst.max(ratio);
    }
    pass &= oracle_worst <= 4.0 + 1e-6;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "dyadic modular boundedness",
        pass,
        &format!(
            "experiment ratio/(p′)^p peak {worst:.3}; flat-weight square-growth oracle max \
             {oracle_worst:.6} (cap 4+1e-6)"
        ),
        elapsed,
        120.0,
    );
    assert!(ok);
}

#[test]
fn log_maximal_norms_are_exact_on_the_window_and_stable() {
    let start = Instant::now();
    let w = Window::unit(1);
    let res = 6u32;
    let ones = make_field(&w, res, FieldKind::Function, &FieldGenerator::Constant(1.0)).unwrap();
    let m = log_maximal(&ones, &CubeSet::SingleGrid(Shift::standard(1)), &w).unwrap();
    let cell_volume = ones.cell_volume();
    let mut exact = true;
    for p in [1.0f64, 2.0] {
        let fine_sum: f64 = m.fine().values().iter().map(|v| v.powf(p)).sum();
        let fine_norm = (fine_sum * (cell_volume / 3.0)).powf(1.0 / p);
        let mesh_sum: f64 = ones.values().iter().map(|v| v.abs().powf(p)).sum();
        let mesh_norm = (mesh_sum * cell_volume).powf(1.0 / p);
        exact &= fine_norm == 1.0 && mesh_norm == 1.0;
    }
    let cfg = ExperimentConfig::from_ini(
        "[experiment]\ntheorem = LOG_MAX_LP\ntrials = 50\nlevel = 6\nseed = 411\n",
    )
    .unwrap();
    let rep = run_experiment(&cfg).unwrap();
    let finite = rep.trials.iter().all(|r| r.ratio.is_finite());
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "log-maximal norms",
        exact && finite && rep.is_bounded() && !rep.summary.refinement.flagged,
        &format!(
            "window identity exact; random max ratio {:.4} with refinement factor {:.3}",
            rep.summary.max_ratio, rep.summary.refinement.factor
        ),
        elapsed,
        60.0,
    );
    assert!(ok);
}

#[test]
fn class_constants_hit_their_trivial_anchors() {
    let start = Instant::now();
    let psi_linear = GrowthFunction::power(1.0).unwrap();
    let mut pass = true;
    let mut doubling_ok = true;
    for d in [1usize, 2] {
        let w = Window::unit(d);
        let res = 3u32;
        let set = CubeSet::SingleGrid(Shift::standard(d));
        let flat =
            make_field(&w, res, FieldKind::Weight, &FieldGenerator::Constant(2.0)).unwrap();
        let ones =
            make_field(&w, res, FieldKind::Weight, &FieldGenerator::Constant(1.0)).unwrap();
        pass &= muckenhoupt_constant(ClassKind::Ap(2.0), &flat, &set, &w)
            .unwrap()
            .value
            == 1.0;
        pass &= muckenhoupt_constant(ClassKind::A1, &flat, &set, &w).unwrap().value == 1.0;
        doubling_ok &= muckenhoupt_constant(ClassKind::Doubling, &ones, &set, &w)
            .unwrap()
            .value
            == (d as f64).exp2();
        let ws = WeightSystem::new(vec![ones.clone()], vec![psi_linear.clone()]).unwrap();
        pass &= pair_class_constant(ClassKind::M, &ws, &ones, &psi_linear, &set, &w)
            .unwrap()
            .value
            == 1.0;
        pass &= pair_class_constant(ClassKind::AAlpha(0.0), &ws, &ones, &psi_linear, &set, &w)
            .unwrap()
            .value
            == 1.0;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report(
        "class-constant anchors",
        pass && doubling_ok,
        "flat-weight and identity instances equal 1 exactly, Lebesgue doubling equals 2^d",
        elapsed,
        5.0,
    );
    assert!(ok);
}
