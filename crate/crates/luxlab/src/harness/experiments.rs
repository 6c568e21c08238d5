//! Per-theorem trial bodies: instance materialization, the measured left
//! and right sides of each inequality, and indicator-test-function lower
//! bounds.

use super::config::ExperimentConfig;
use super::TheoremId;
use crate::carleson::{carleson_constant, embedding_sum, CarlesonSequence};
use crate::dyadic::{DyadicCube, Shift, UnitScale, Window};
use crate::field::{field_from_descriptor, make_field, FieldGenerator, FieldKind, MeshField};
use crate::growth::{GrowthFunction, INVERSE_TOL};
use crate::maximal::{
    box_rows, fractional_fine_clipped, fractional_multilinear_maximal, log_maximal,
    multilinear_weighted_maximal, prefix_of_fine, CubeSet, FineField,
};
use crate::numerics::{log_spaced, split_seed, Accumulator};
use crate::orlicz::{luxemburg_norm, modular, NORM_TOL};
use crate::weights::{
    muckenhoupt_constant, pair_class_constant, w_class_constant, ClassKind, WeightSystem,
};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One materialized trial instance at some mesh level.
pub(super) struct Instance {
    pub ws: WeightSystem,
    pub omega: MeshField,
    pub fs: Vec<MeshField>,
    pub resolution: u32,
}

impl Instance {
    pub fn sigma_refs(&self) -> Vec<&MeshField> {
        self.ws.sigmas.iter().collect()
    }
}

/// The aggregate growth function `Φ` with `Φ⁻¹ = ∏ᵢ Φᵢ⁻¹`, unless the
/// configuration overrides it.
pub(super) fn aggregate_phi(cfg: &ExperimentConfig) -> Result<GrowthFunction> {
    match &cfg.phi_override {
        Some(phi) => Ok(phi.clone()),
        None => crate::growth::product_compose(&cfg.phis),
    }
}

/// Theorems whose statement fixes one weight `σ` shared by every slot.
pub(super) fn requires_equal_sigmas(theorem: TheoremId) -> bool {
    matches!(theorem, TheoremId::WeakType | TheoremId::MClassEquiv)
}

fn randomized_descriptor(desc: &str, window: &Window, rng: &mut ChaCha8Rng) -> String {
    if let Some(rest) = desc.strip_prefix("singularity:") {
        if !rest.contains("center=") {
            let side = (window.level as f64).exp2();
            let centers: Vec<String> = window
                .index
                .iter()
                .map(|&w| {
                    let c = w as f64 * side + rng.gen::<f64>() * side;
                    format!("{c}")
                })
                .collect();
            return format!("singularity:center={},{rest}", centers.join(","));
        }
    }
    desc.to_string()
}

fn build_field(
    desc: &str,
    window: &Window,
    resolution: u32,
    kind: FieldKind,
    slot_seed: u64,
) -> Result<MeshField> {
    let mut rng = ChaCha8Rng::seed_from_u64(slot_seed);
    let resolved = randomized_descriptor(desc, window, &mut rng);
    field_from_descriptor(&resolved, window, resolution, kind, rng.gen::<u64>())
}

/// Averages `2^{levels·d}` child cells per coarse cell, producing the exact
/// conditional mean of the fine field on the coarser mesh.
fn coarsen(field: &MeshField, levels: u32) -> Result<MeshField> {
    if levels == 0 {
        return Ok(field.clone());
    }
    let d = field.d();
    let per_f = field.cells_per_axis();
    let factor = 1usize << levels;
    let per_c = per_f / factor;
    if per_c * factor != per_f || per_c == 0 {
        return Err(Error::Resolution(format!(
            "cannot coarsen a {per_f}-cell axis by 2^{levels}"
        )));
    }
    let mut values = vec![0.0f64; per_c.pow(d as u32)];
    for (flat_f, v) in field.values().iter().enumerate() {
        let mut rem = flat_f;
        let mut flat_c = 0usize;
        for axis in 0..d {
            let stride = per_f.pow((d - 1 - axis) as u32);
            let coord = rem / stride;
            rem %= stride;
            flat_c = flat_c * per_c + coord / factor;
        }
        values[flat_c] += v;
    }
    let scale = (factor as f64).powi(d as i32);
    for v in &mut values {
        *v /= scale;
    }
    make_field(
        &field.window,
        field.resolution - levels,
        field.kind,
        &FieldGenerator::FromValues(values),
    )
}

fn weight_system(cfg: &ExperimentConfig, sigmas: Vec<MeshField>) -> Result<WeightSystem> {
    match &cfg.phi_override {
        None => WeightSystem::new(sigmas, cfg.phis.clone()),
        Some(phi) => {
            let refs: Vec<&MeshField> = sigmas.iter().collect();
            let nu = crate::weights::nu_field(&refs, &cfg.phis, phi)?;
            Ok(WeightSystem {
                sigmas,
                phis: cfg.phis.clone(),
                phi: phi.clone(),
                nu,
            })
        }
    }
}

/// Builds the trial's fields at `target_level`. Fields are always generated
/// at the finest level the experiment will visit and coarsened down by cell
/// averaging, so the coarse and refined runs see the same instance.
pub(super) fn materialize(
    cfg: &ExperimentConfig,
    trial_seed: u64,
    target_level: u32,
) -> Result<Instance> {
    let fine_level = cfg.level + 2;
    let drop = fine_level - target_level;
    let window = &cfg.window;
    let equal_sigmas = requires_equal_sigmas(cfg.theorem);
    if equal_sigmas {
        for desc in &cfg.sigma_descs {
            if desc != &cfg.sigma_descs[0] {
                return Err(Error::Hypothesis(format!(
                    "EQUAL_WEIGHTS: {} requires every sigma descriptor to agree",
                    cfg.theorem.name()
                )));
            }
        }
    }
    let mut sigmas = Vec::with_capacity(cfg.n);
    for (i, desc) in cfg.sigma_descs.iter().enumerate() {
        let slot = if equal_sigmas { 0 } else { i as u64 };
        let fine = build_field(
            desc,
            window,
            fine_level,
            FieldKind::Weight,
            split_seed(trial_seed, slot),
        )?;
        sigmas.push(coarsen(&fine, drop)?);
    }
    let omega_fine = build_field(
        &cfg.omega_desc,
        window,
        fine_level,
        FieldKind::Weight,
        split_seed(trial_seed, cfg.n as u64),
    )?;
    let omega = coarsen(&omega_fine, drop)?;
    let mut fs = Vec::with_capacity(cfg.n);
    for (i, desc) in cfg.f_descs.iter().enumerate() {
        let fine = build_field(
            desc,
            window,
            fine_level,
            FieldKind::Function,
            split_seed(trial_seed, (cfg.n + 1 + i) as u64),
        )?;
        fs.push(coarsen(&fine, drop)?);
    }
    Ok(Instance {
        ws: weight_system(cfg, sigmas)?,
        omega,
        fs,
        resolution: target_level,
    })
}

/// Divides each test function by its Luxemburg norm.
pub(super) fn normalize_inputs(
    fs: &[MeshField],
    sigmas: &[&MeshField],
    phis: &[GrowthFunction],
) -> Result<Vec<MeshField>> {
    let mut out = Vec::with_capacity(fs.len());
    for ((f, sigma), phi) in fs.iter().zip(sigmas).zip(phis) {
        let norm = luxemburg_norm(phi, f, sigma, NORM_TOL)?.value;
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Degenerate(format!(
                "test function has unusable norm {norm}"
            )));
        }
        let mut g = f.clone();
        for v in g.values_mut() {
            *v /= norm;
        }
        out.push(g);
    }
    Ok(out)
}

fn u_volume_of(field: &MeshField) -> f64 {
    field.cell_volume() / 3f64.powi(field.d() as i32)
}

/// `Σ Ψ(v)·w·u_volume` over the fine lattice.
pub(super) fn fine_modular(
    psi: &GrowthFunction,
    values: &[f64],
    weight: &[f64],
    u_volume: f64,
) -> Result<f64> {
    let mut acc = Accumulator::new();
    for (v, w) in values.iter().zip(weight) {
        if *w == 0.0 {
            continue;
        }
        acc.add(psi.eval(*v)? * *w);
    }
    Ok(acc.total() * u_volume)
}

/// Luxemburg norm of a fine-lattice field against a fine-lattice weight:
/// the certified upper endpoint of a bisection bracket around
/// `inf{λ : Σ Ψ(v/λ)w·u_vol ≤ 1}`.
pub(super) fn fine_luxemburg(
    psi: &GrowthFunction,
    values: &[f64],
    weight: &[f64],
    u_volume: f64,
    tol: f64,
) -> Result<f64> {
    let vmax = values
        .iter()
        .zip(weight)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, _)| *v)
        .fold(0.0f64, f64::max);
    if vmax == 0.0 {
        return Ok(0.0);
    }
    let probe = |lam: f64| -> Option<f64> {
        let mut acc = Accumulator::new();
        for (v, w) in values.iter().zip(weight) {
            if *w == 0.0 || *v == 0.0 {
                continue;
            }
            match psi.eval(*v / lam) {
                Ok(p) => acc.add(p * *w),
                Err(_) => return None,
            }
        }
        let m = acc.total() * u_volume;
        m.is_finite().then_some(m)
    };
    let mut hi = vmax;
    let mut guard = 0u32;
    while probe(hi).map_or(true, |m| m > 1.0) {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return Err(Error::Degenerate(
                "Luxemburg bracket expansion failed on the fine lattice".into(),
            ));
        }
    }
    let mut lo = hi / 2.0;
    guard = 0;
    while probe(lo).map_or(false, |m| m <= 1.0) {
        hi = lo;
        lo /= 2.0;
        guard += 1;
        if guard > 2000 || lo < f64::MIN_POSITIVE {
            // The modular never exceeds 1: the norm is 0 in the limit.
            return Ok(0.0);
        }
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match probe(mid) {
            Some(m) if m <= 1.0 => hi = mid,
            _ => lo = mid,
        }
    }
    Ok(hi)
}

/// `(Σ v^p · cell_volume / 3^d)^{1/p}` over a fine lattice, ordered so an
/// identically-1 field on the unit window yields exactly 1.
pub(super) fn lp_norm_fine(values: &[f64], cell_volume: f64, d: usize, p: f64) -> f64 {
    let mut acc = Accumulator::new();
    for v in values {
        if *v > 0.0 {
            acc.add(v.powf(p));
        }
    }
    ((acc.total() * cell_volume) / 3f64.powi(d as i32)).powf(1.0 / p)
}

/// Mesh-cell Lebesgue norm `(Σ |v|^p · cell_volume)^{1/p}`.
pub(super) fn lp_norm_mesh(field: &MeshField, p: f64) -> f64 {
    let mut acc = Accumulator::new();
    for v in field.values() {
        if *v != 0.0 {
            acc.add(v.abs().powf(p));
        }
    }
    (acc.total() * field.cell_volume()).powf(1.0 / p)
}

fn window_cube(window: &Window) -> DyadicCube {
    window.as_cube()
}

/// The window plus randomly drawn standard-grid descendants.
pub(super) fn sample_cubes(
    cfg: &ExperimentConfig,
    resolution: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DyadicCube>> {
    let window = &cfg.window;
    let d = window.d();
    let max_depth = resolution.min(4);
    let mut cubes = vec![window_cube(window)];
    for _ in 1..cfg.sample_cubes {
        let depth = rng.gen_range(1..=max_depth) as i32;
        let per = 1i64 << depth;
        let index: Vec<i64> = window
            .index
            .iter()
            .map(|&w| w * per + rng.gen_range(0..per))
            .collect();
        cubes.push(DyadicCube::new(
            Shift::standard(d),
            window.level - depth,
            index,
        )?);
    }
    Ok(cubes)
}

/// Exact 0/1 indicator field of a standard-grid cube at mesh granularity.
pub(super) fn cube_indicator(
    cube: &DyadicCube,
    window: &Window,
    resolution: u32,
) -> Result<MeshField> {
    let side = cube.side();
    let corner: Vec<f64> = cube.index.iter().map(|&m| m as f64 * side).collect();
    let sides = vec![side; cube.d()];
    make_field(
        window,
        resolution,
        FieldKind::Function,
        &FieldGenerator::Indicator { corner, sides },
    )
}

fn product_field(f: &MeshField, sigma: &MeshField) -> MeshField {
    let mut out = f.clone();
    for (v, s) in out.values_mut().iter_mut().zip(sigma.values()) {
        *v *= s;
    }
    out
}

fn single_beta(cfg: &ExperimentConfig) -> Result<Shift> {
    match &cfg.cube_set {
        CubeSet::SingleGrid(shift) => Ok(shift.clone()),
        _ => Err(Error::Config(format!(
            "{} runs on a single dyadic grid; set cube-set = standard or shifted:<…>",
            cfg.theorem.name()
        ))),
    }
}

fn random_sequence(
    cfg: &ExperimentConfig,
    beta: &Shift,
    resolution: u32,
    rng: &mut ChaCha8Rng,
) -> Result<CarlesonSequence> {
    let window = &cfg.window;
    let d = window.d();
    let max_depth = resolution.min(5);
    let mut seq = CarlesonSequence::new(beta.clone());
    // Shifted grids reach outside the window near the boundary; the window
    // cube itself and its standard descendants stay inside for β = 0. For
    // shifted β, draw from the cubes the window certainly contains.
    for _ in 0..12 {
        let depth = rng.gen_range(1..=max_depth) as i32;
        let per = 1i64 << depth;
        let level = window.level - depth;
        let index: Vec<i64> = window
            .index
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                let lo = if beta.is_shifted(j) { 1 } else { 0 };
                let hi = if beta.is_shifted(j) { per - 1 } else { per };
                if lo >= hi {
                    w * per
                } else {
                    w * per + rng.gen_range(lo..hi)
                }
            })
            .collect();
        let cube = DyadicCube::new(beta.clone(), level, index)?;
        if !window.contains_cube(&cube) {
            continue;
        }
        let volume = (cube.side()).powi(d as i32);
        seq.insert(&cube, rng.gen_range(0.25..1.0) * volume)?;
    }
    if seq.is_empty() {
        let cube = window_cube(window);
        if *beta == Shift::standard(d) {
            seq.insert(&cube, 1.0)?;
        } else {
            return Err(Error::Degenerate(
                "no sequence cube of the shifted grid fits the window".into(),
            ));
        }
    }
    Ok(seq)
}

/// `∫_box Ψ(values)·weight` over a u-cell box, without the volume factor.
fn psi_box_weighted(
    psi: &GrowthFunction,
    values: &[f64],
    weight: &[f64],
    per: usize,
    d: usize,
    corner: &[i64],
    side: i64,
) -> Result<f64> {
    let mut acc = Accumulator::new();
    let mut fail: Option<Error> = None;
    box_rows(per, d, corner, side, |base, len| {
        if fail.is_some() {
            return;
        }
        for u in base..base + len {
            if weight[u] == 0.0 {
                continue;
            }
            match psi.eval(values[u]) {
                Ok(p) => acc.add(p * weight[u]),
                Err(e) => {
                    fail = Some(e);
                    return;
                }
            }
        }
    });
    match fail {
        Some(e) => Err(e),
        None => Ok(acc.total()),
    }
}

/// `∫_R Ψ(M_α(σ⃗χ_R))·ω`, the testing integral the S- and L-classes share,
/// using the same all-grids inner maximal as the class constants.
fn testing_integral(
    inst: &Instance,
    omega_fine: &FineField,
    psi: &GrowthFunction,
    alpha: f64,
    cube: &DyadicCube,
    window: &Window,
) -> Result<f64> {
    let resolution = inst.resolution;
    let cell_volume = inst.omega.cell_volume();
    let u_volume = u_volume_of(&inst.omega);
    let scale = UnitScale::new(window, resolution)?;
    let (corner_u, side_u) = scale.cube_box_u(cube, window)?;
    let nums: Vec<_> = inst
        .ws
        .sigmas
        .iter()
        .map(|s| Ok(prefix_of_fine(&FineField::from_mesh(s)?, u_volume)))
        .collect::<Result<_>>()?;
    let clips: Vec<Option<(Vec<i64>, i64)>> = (0..inst.ws.n())
        .map(|_| Some((corner_u.clone(), side_u)))
        .collect();
    let maximal = fractional_fine_clipped(
        &nums,
        &clips,
        alpha,
        &CubeSet::AllGrids,
        window,
        resolution,
        cell_volume,
    )?;
    let per = scale.per_axis as usize;
    Ok(psi_box_weighted(
        psi,
        maximal.values(),
        omega_fine.values(),
        per,
        inst.omega.d(),
        &corner_u,
        side_u,
    )? * u_volume)
}

/// Largest log-log slope of `theta` on `[1, 10^4]` — the measured
/// upper-type exponent.
pub(super) fn upper_type_exponent(theta: &GrowthFunction) -> Result<f64> {
    let grid = log_spaced(1.0, 1e4, 33);
    let mut q = 1.0f64;
    for pair in grid.windows(2) {
        let a = theta.eval(pair[0])?;
        let b = theta.eval(pair[1])?;
        if a > 0.0 && b > 0.0 {
            q = q.max((b / a).ln() / (pair[1] / pair[0]).ln());
        }
    }
    Ok(q)
}

fn check_doubling(cfg: &ExperimentConfig, inst: &Instance) -> Result<()> {
    for (i, sigma) in inst.ws.sigmas.iter().enumerate() {
        let report = muckenhoupt_constant(
            ClassKind::Doubling,
            sigma,
            &cfg.cube_set,
            &cfg.window,
        )?;
        if !(report.value <= cfg.doubling_cap) {
            return Err(Error::Hypothesis(format!(
                "DOUBLING(sigma{}): measured constant {} exceeds the cap {}",
                i + 1,
                report.value,
                cfg.doubling_cap
            )));
        }
    }
    Ok(())
}

fn check_reverse_holder(cfg: &ExperimentConfig, inst: &Instance) -> Result<()> {
    let report = crate::weights::reverse_holder_check(&inst.ws, &cfg.cube_set, &cfg.window)?;
    if !(report.upper <= cfg.rh_cap) {
        return Err(Error::Hypothesis(format!(
            "REVERSE_HOLDER: measured constant {} exceeds the cap {}",
            report.upper, cfg.rh_cap
        )));
    }
    Ok(())
}

/// Measured rhs of the fractional-maximal norm theorems: `Ψ⁻¹` applied to
/// the theorem's combination of class constants.
fn fractional_rhs(cfg: &ExperimentConfig, inst: &Instance) -> Result<f64> {
    let window = &cfg.window;
    let psi = &cfg.psi;
    let pair = |kind: ClassKind| -> Result<f64> {
        Ok(pair_class_constant(kind, &inst.ws, &inst.omega, psi, &cfg.cube_set, window)?.value)
    };
    let fw = |sigma: &MeshField| -> Result<f64> {
        Ok(muckenhoupt_constant(ClassKind::AInfFw, sigma, &cfg.cube_set, window)?.value)
    };
    let arg = match cfg.theorem {
        TheoremId::SawyerSuff | TheoremId::SawyerPq => pair(ClassKind::LAlpha(cfg.alpha))?,
        TheoremId::SAlphaBound => pair(ClassKind::SAlpha(cfg.alpha))?,
        TheoremId::NormB => pair(ClassKind::BAlpha(cfg.alpha))?,
        TheoremId::NormA => {
            let mut sum = Accumulator::new();
            for (phi_i, sigma) in cfg.phis.iter().zip(inst.ws.sigmas.iter()) {
                let theta_i = GrowthFunction::of_inverse(psi.clone(), phi_i.clone());
                sum.add(theta_i.eval(fw(sigma)?)?);
            }
            pair(ClassKind::AAlpha(cfg.alpha))? * sum.total()
        }
        TheoremId::NormAtildeW => {
            let w = w_class_constant(&inst.ws, psi, &cfg.cube_set, window)?.value;
            w * pair(ClassKind::ATildeAlpha(cfg.alpha))?
        }
        TheoremId::NormAProd => {
            let mut prod = 1.0f64;
            for (phi_i, sigma) in cfg.phis.iter().zip(inst.ws.sigmas.iter()) {
                let theta_i = GrowthFunction::of_inverse(psi.clone(), phi_i.clone());
                prod *= fw(sigma)?.powf(upper_type_exponent(&theta_i)?);
            }
            pair(ClassKind::AAlpha(cfg.alpha))? * prod
        }
        _ => unreachable!("not a fractional norm theorem"),
    };
    psi.inverse(arg, INVERSE_TOL)
}

/// Computes one trial's (lhs, rhs) for the configured theorem.
pub(super) fn theorem_sides(
    cfg: &ExperimentConfig,
    inst: &Instance,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let window = &cfg.window;
    let sigmas = inst.sigma_refs();
    let u_volume = u_volume_of(&inst.omega);
    match cfg.theorem {
        TheoremId::WeakType => {
            let beta = single_beta(cfg)?;
            let phi = aggregate_phi(cfg)?;
            let gs = normalize_inputs(&inst.fs, &sigmas, &cfg.phis)?;
            let g_refs: Vec<&MeshField> = gs.iter().collect();
            let m = multilinear_weighted_maximal(
                &sigmas,
                &g_refs,
                &CubeSet::SingleGrid(beta.clone()),
                window,
            )?;
            let vmax = m.fine().values().iter().cloned().fold(0.0f64, f64::max);
            if vmax <= 0.0 {
                return Err(Error::Degenerate(
                    "the maximal function vanishes identically".into(),
                ));
            }
            let grid = log_spaced(vmax * 1e-3, vmax * (1.0 - 1e-12), cfg.lambda_points);
            let f_refs: Vec<&MeshField> = inst.fs.iter().collect();
            let profile = crate::maximal::weak_type_profile(
                &sigmas, &f_refs, &cfg.phis, &phi, &grid, &beta, window,
            )?;
            Ok((profile.supremum, cfg.n as f64))
        }
        TheoremId::CarlesonEmbed => {
            let beta = single_beta(cfg)?;
            let phi = aggregate_phi(cfg)?;
            let theta = GrowthFunction::of_inverse(cfg.psi.clone(), phi);
            let seq = random_sequence(cfg, &beta, inst.resolution, rng)?;
            let lam = carleson_constant(&seq, &inst.ws.nu, &theta, window)?;
            let f_refs: Vec<&MeshField> = inst.fs.iter().collect();
            let lhs = embedding_sum(&seq, &cfg.psi, &sigmas, &f_refs, &cfg.phis, window)?;
            Ok((lhs, lam.value))
        }
        TheoremId::CarlesonConverse => {
            let beta = single_beta(cfg)?;
            let phi = aggregate_phi(cfg)?;
            let theta = GrowthFunction::of_inverse(cfg.psi.clone(), phi);
            let seq = random_sequence(cfg, &beta, inst.resolution, rng)?;
            let lam = carleson_constant(&seq, &inst.ws.nu, &theta, window)?;
            let mut test_cubes = sample_cubes(cfg, inst.resolution, rng)?;
            if let Some(argmax) = &lam.argmax {
                test_cubes.insert(0, argmax.clone());
            }
            let mut c2 = 0.0f64;
            for r in &test_cubes {
                let chi = cube_indicator(r, window, inst.resolution)?;
                let fs: Vec<&MeshField> = (0..cfg.n).map(|_| &chi).collect();
                let s = embedding_sum(&seq, &cfg.psi, &sigmas, &fs, &cfg.phis, window)?;
                c2 = c2.max(s);
            }
            if c2 <= 0.0 {
                return Err(Error::Degenerate(
                    "indicator embedding sums all vanished".into(),
                ));
            }
            Ok((lam.value, c2))
        }
        TheoremId::MClassBound | TheoremId::MClassEquiv | TheoremId::KClassEquiv => {
            if cfg.theorem == TheoremId::KClassEquiv {
                check_doubling(cfg, inst)?;
            }
            let gs = normalize_inputs(&inst.fs, &sigmas, &cfg.phis)?;
            let g_refs: Vec<&MeshField> = gs.iter().collect();
            let m = multilinear_weighted_maximal(&sigmas, &g_refs, &cfg.cube_set, window)?;
            let omega_fine = FineField::from_mesh(&inst.omega)?;
            let lhs = fine_luxemburg(
                &cfg.psi,
                m.fine().values(),
                omega_fine.values(),
                u_volume,
                NORM_TOL,
            )?;
            let kind = if cfg.theorem == TheoremId::KClassEquiv {
                ClassKind::K
            } else {
                ClassKind::M
            };
            let constant =
                pair_class_constant(kind, &inst.ws, &inst.omega, &cfg.psi, &cfg.cube_set, window)?;
            Ok((lhs, cfg.psi.inverse(constant.value, INVERSE_TOL)?))
        }
        TheoremId::SawyerSuff
        | TheoremId::SawyerPq
        | TheoremId::SAlphaBound
        | TheoremId::NormB
        | TheoremId::NormA
        | TheoremId::NormAtildeW
        | TheoremId::NormAProd => {
            let gs = normalize_inputs(&inst.fs, &sigmas, &cfg.phis)?;
            let products: Vec<MeshField> = gs
                .iter()
                .zip(inst.ws.sigmas.iter())
                .map(|(g, s)| product_field(g, s))
                .collect();
            let p_refs: Vec<&MeshField> = products.iter().collect();
            let m = fractional_multilinear_maximal(&p_refs, cfg.alpha, &cfg.cube_set, window)?;
            let omega_fine = FineField::from_mesh(&inst.omega)?;
            let lhs = fine_luxemburg(
                &cfg.psi,
                m.fine().values(),
                omega_fine.values(),
                u_volume,
                NORM_TOL,
            )?;
            Ok((lhs, fractional_rhs(cfg, inst)?))
        }
        TheoremId::SawyerLocal => {
            let beta = single_beta(cfg)?;
            let cubes = sample_cubes(cfg, inst.resolution, rng)?;
            let r = cubes[rng.gen_range(0..cubes.len())].clone();
            let chi = cube_indicator(&r, window, inst.resolution)?;
            let mut f2r = product_field(&inst.fs[1], &chi);
            let norm = luxemburg_norm(&cfg.phis[1], &f2r, &inst.ws.sigmas[1], NORM_TOL)?.value;
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Degenerate(
                    "the localized test function vanishes on the sampled cube".into(),
                ));
            }
            for v in f2r.values_mut() {
                *v /= norm;
            }
            let in1 = product_field(&chi, &inst.ws.sigmas[0]);
            let in2 = product_field(&f2r, &inst.ws.sigmas[1]);
            let m = fractional_multilinear_maximal(
                &[&in1, &in2],
                cfg.alpha,
                &CubeSet::SingleGrid(beta),
                window,
            )?;
            let omega_fine = FineField::from_mesh(&inst.omega)?;
            let scale = UnitScale::new(window, inst.resolution)?;
            let (corner_u, side_u) = scale.cube_box_u(&r, window)?;
            let lhs = psi_box_weighted(
                &cfg.psi,
                m.fine().values(),
                omega_fine.values(),
                scale.per_axis as usize,
                cfg.d,
                &corner_u,
                side_u,
            )? * u_volume;
            let l_const = pair_class_constant(
                ClassKind::LAlpha(cfg.alpha),
                &inst.ws,
                &inst.omega,
                &cfg.psi,
                &cfg.cube_set,
                window,
            )?
            .value;
            let theta1 = GrowthFunction::of_inverse(cfg.psi.clone(), cfg.phis[0].clone());
            let sigma1_r = inst.ws.sigmas[0].integrate(&r)?;
            Ok((lhs, l_const / theta1.eval(1.0 / sigma1_r)?))
        }
        TheoremId::SAlphaNecessity => {
            check_reverse_holder(cfg, inst)?;
            // The upper side repeats the S-class bound; the substance of
            // this experiment is the indicator lower profile.
            let gs = normalize_inputs(&inst.fs, &sigmas, &cfg.phis)?;
            let products: Vec<MeshField> = gs
                .iter()
                .zip(inst.ws.sigmas.iter())
                .map(|(g, s)| product_field(g, s))
                .collect();
            let p_refs: Vec<&MeshField> = products.iter().collect();
            let m = fractional_multilinear_maximal(&p_refs, cfg.alpha, &cfg.cube_set, window)?;
            let omega_fine = FineField::from_mesh(&inst.omega)?;
            let lhs = fine_luxemburg(
                &cfg.psi,
                m.fine().values(),
                omega_fine.values(),
                u_volume,
                NORM_TOL,
            )?;
            let s_const = pair_class_constant(
                ClassKind::SAlpha(cfg.alpha),
                &inst.ws,
                &inst.omega,
                &cfg.psi,
                &cfg.cube_set,
                window,
            )?;
            Ok((lhs, cfg.psi.inverse(s_const.value, INVERSE_TOL)?))
        }
        TheoremId::OrliczMaxBound => {
            let m = multilinear_weighted_maximal(
                &sigmas,
                &[&inst.fs[0]],
                &cfg.cube_set,
                window,
            )?;
            let sigma_fine = FineField::from_mesh(&inst.ws.sigmas[0])?;
            let lhs = fine_modular(
                &cfg.phis[0],
                m.fine().values(),
                sigma_fine.values(),
                u_volume,
            )?;
            let rhs = modular(&cfg.phis[0], &inst.fs[0], &inst.ws.sigmas[0])?;
            Ok((lhs, rhs))
        }
        TheoremId::LogMaxLp => {
            let m = log_maximal(&inst.fs[0], &cfg.cube_set, window)?;
            let lhs = lp_norm_fine(
                m.fine().values(),
                inst.fs[0].cell_volume(),
                cfg.d,
                cfg.p,
            );
            let rhs = lp_norm_mesh(&inst.fs[0], cfg.p);
            if rhs == 0.0 {
                return Err(Error::Degenerate("the input has zero norm".into()));
            }
            Ok((lhs, rhs))
        }
    }
}

/// One cube's indicator-test comparison.
#[derive(Debug, Clone)]
pub struct LowerBoundPoint {
    pub cube: DyadicCube,
    pub operator_side: f64,
    pub class_side: f64,
    pub ratio: f64,
}

/// Indicator lower bounds for a whole instance.
#[derive(Debug, Clone)]
pub struct LowerBoundProfile {
    pub points: Vec<LowerBoundPoint>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// For each sampled cube `R`, compares the operator side evaluated on the
/// normalized indicators `χ_R/‖χ_R‖` with `R`'s own contribution to the
/// theorem's class constant.
pub(super) fn lower_bound_points(
    cfg: &ExperimentConfig,
    inst: &Instance,
    cubes: &[DyadicCube],
) -> Result<LowerBoundProfile> {
    let window = &cfg.window;
    let psi = &cfg.psi;
    let u_volume = u_volume_of(&inst.omega);
    let omega_fine = FineField::from_mesh(&inst.omega)?;
    let sigmas = inst.sigma_refs();
    let theta = GrowthFunction::of_inverse(psi.clone(), inst.ws.phi.clone());
    let thetas: Vec<GrowthFunction> = cfg
        .phis
        .iter()
        .map(|phi_i| GrowthFunction::of_inverse(psi.clone(), phi_i.clone()))
        .collect();
    let mut points = Vec::with_capacity(cubes.len());
    for r in cubes {
        // χ_R/‖χ_R‖ via the indicator-norm identity ‖χ_R‖ = 1/Φ⁻¹(1/σ(R)).
        let chi = cube_indicator(r, window, inst.resolution)?;
        let mut scaled = Vec::with_capacity(cfg.n);
        for (phi_i, sigma) in cfg.phis.iter().zip(inst.ws.sigmas.iter()) {
            let mass = sigma.integrate(r)?;
            let factor = phi_i.inverse(1.0 / mass, INVERSE_TOL)?;
            let mut g = chi.clone();
            for v in g.values_mut() {
                *v *= factor;
            }
            scaled.push(g);
        }
        let g_refs: Vec<&MeshField> = scaled.iter().collect();
        let (operator_side, class_side) = match cfg.theorem {
            TheoremId::MClassEquiv | TheoremId::KClassEquiv => {
                let m = multilinear_weighted_maximal(&sigmas, &g_refs, &cfg.cube_set, window)?;
                let op = fine_luxemburg(
                    psi,
                    m.fine().values(),
                    omega_fine.values(),
                    u_volume,
                    NORM_TOL,
                )?;
                let omega_r = inst.omega.integrate(r)?;
                let contribution = if cfg.theorem == TheoremId::MClassEquiv {
                    omega_r * theta.eval(1.0 / inst.ws.nu.integrate(r)?)?
                } else {
                    let mut prod = omega_r;
                    for (theta_i, sigma) in thetas.iter().zip(inst.ws.sigmas.iter()) {
                        prod *= theta_i.eval(1.0 / sigma.integrate(r)?)?;
                    }
                    prod
                };
                (op, psi.inverse(contribution, INVERSE_TOL)?)
            }
            TheoremId::SawyerPq | TheoremId::SAlphaNecessity => {
                let products: Vec<MeshField> = scaled
                    .iter()
                    .zip(inst.ws.sigmas.iter())
                    .map(|(g, s)| product_field(g, s))
                    .collect();
                let p_refs: Vec<&MeshField> = products.iter().collect();
                // The class's testing integral takes the supremum over every
                // shifted grid, so the operator side must do the same for
                // the comparison to be like-for-like.
                let m = fractional_multilinear_maximal(
                    &p_refs,
                    cfg.alpha,
                    &CubeSet::AllGrids,
                    window,
                )?;
                let op = fine_modular(psi, m.fine().values(), omega_fine.values(), u_volume)?;
                let integral =
                    testing_integral(inst, &omega_fine, psi, cfg.alpha, r, window)?;
                let prefactor = if cfg.theorem == TheoremId::SawyerPq {
                    let mut prod = 1.0f64;
                    for (theta_i, sigma) in thetas.iter().zip(inst.ws.sigmas.iter()) {
                        prod *= theta_i.eval(1.0 / sigma.integrate(r)?)?;
                    }
                    prod
                } else {
                    theta.eval(1.0 / inst.ws.nu.integrate(r)?)?
                };
                (op, prefactor * integral)
            }
            other => {
                return Err(Error::Usage(format!(
                    "{} has no indicator lower-bound profile",
                    other.name()
                )));
            }
        };
        if !(class_side > 0.0) {
            return Err(Error::Degenerate(format!(
                "class contribution of cube {} is not positive",
                r.descriptor()
            )));
        }
        points.push(LowerBoundPoint {
            cube: r.clone(),
            operator_side,
            class_side,
            ratio: operator_side / class_side,
        });
    }
    let min_ratio = points.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = points
        .iter()
        .map(|p| p.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LowerBoundProfile {
        points,
        min_ratio,
        max_ratio,
    })
}
