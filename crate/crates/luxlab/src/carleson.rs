//! Carleson sequences on a single shifted dyadic grid: the Carleson
//! constant `Λ̂ = sup_R Θ(1/ν(R))·Σ_{Q⊆R} λ_Q`, embedding sums against
//! normalized test functions, level-set sums, and builders that turn a
//! sparse family's disjoint sets into sequence entries.
//!
//! Subset sums are accumulated bottom-up: entries are keyed by (level,
//! index) in ascending order, so one pass pushes each cube's subtree total
//! into its parent. Sequences serialize one entry per line as
//! `cube-descriptor,value`; descriptors contain commas, so parsing splits
//! on the last comma.

use crate::dyadic::{DyadicCube, Shift, SparseFamily, Window};
use crate::field::{average, MeshField};
use crate::growth::GrowthFunction;
use crate::maximal::{level_cubes, multilinear_weighted_maximal, CubeSet, FineField};
use crate::numerics::Accumulator;
use crate::orlicz::{luxemburg_norm, NORM_TOL};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Map key for cubes of one grid. The derived order sorts by level first,
/// so ascending iteration visits the finest cubes before their ancestors —
/// exactly the order the bottom-up subtree accumulation needs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CubeKey {
    pub level: i32,
    pub index: Vec<i64>,
}

impl CubeKey {
    fn of(cube: &DyadicCube) -> Self {
        Self {
            level: cube.level,
            index: cube.index.clone(),
        }
    }
}

/// A nonnegative sequence `{λ_Q}` indexed by cubes of one grid `D^β`.
/// Zero values are never stored.
#[derive(Debug, Clone)]
pub struct CarlesonSequence {
    pub beta: Shift,
    entries: BTreeMap<CubeKey, f64>,
}

impl CarlesonSequence {
    pub fn new(beta: Shift) -> Self {
        Self {
            beta,
            entries: BTreeMap::new(),
        }
    }

    /// Inserts `λ_Q` for a cube of the sequence's grid, replacing any
    /// previous value; zeros are dropped.
    pub fn insert(&mut self, cube: &DyadicCube, value: f64) -> Result<()> {
        if cube.beta != self.beta {
            return Err(Error::Usage(
                "cube belongs to a different grid than the sequence".into(),
            ));
        }
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::Usage(format!(
                "sequence values must be finite and nonnegative, got {value}"
            )));
        }
        if value > 0.0 {
            self.entries.insert(CubeKey::of(cube), value);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending (level, index) order.
    pub fn iter(&self) -> impl Iterator<Item = (&CubeKey, &f64)> {
        self.entries.iter()
    }

    /// Reconstructs the cube a key stands for.
    pub fn cube(&self, key: &CubeKey) -> Result<DyadicCube> {
        DyadicCube::new(self.beta.clone(), key.level, key.index.clone())
    }

    /// One `cube-descriptor,value` line per entry, in key order.
    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        for (key, value) in &self.entries {
            out.push_str(&self.cube(key)?.descriptor());
            out.push(',');
            out.push_str(&value.to_string());
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses `cube-descriptor,value` lines. Descriptors contain commas,
    /// so the value is whatever follows the last one. All cubes must lie
    /// on one grid.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut seq: Option<CarlesonSequence> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (desc, value) = line.rsplit_once(',').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `descriptor,value`", lineno + 1))
            })?;
            let cube = DyadicCube::from_descriptor(desc.trim())?;
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Parse(format!("line {}: bad value `{}`", lineno + 1, value.trim()))
            })?;
            let seq = seq.get_or_insert_with(|| CarlesonSequence::new(cube.beta.clone()));
            if cube.beta != seq.beta {
                return Err(Error::Parse(format!(
                    "line {}: cube grid differs from the first entry's",
                    lineno + 1
                )));
            }
            seq.insert(&cube, value)?;
        }
        Ok(seq.unwrap_or_else(|| CarlesonSequence::new(Shift::standard(1))))
    }
}

/// A computed Carleson constant with the cube attaining the supremum
/// (first in (level, index) order on ties; `None` for empty sequences).
#[derive(Debug, Clone)]
pub struct CarlesonConstant {
    pub value: f64,
    pub argmax: Option<DyadicCube>,
}

/// `Λ̂ = sup_R Θ(1/ν(R))·Σ_{Q ⊆ R} λ_Q`, the supremum running over every
/// cube carrying a positive subtree sum. Subset sums are accumulated in
/// one bottom-up pass over the (level, index)-ordered lattice.
pub fn carleson_constant(
    seq: &CarlesonSequence,
    nu: &MeshField,
    theta: &GrowthFunction,
    window: &Window,
) -> Result<CarlesonConstant> {
    if seq.is_empty() {
        return Ok(CarlesonConstant {
            value: 0.0,
            argmax: None,
        });
    }
    for key in seq.entries.keys() {
        let cube = seq.cube(key)?;
        if !window.contains_cube(&cube) {
            return Err(Error::Usage(format!(
                "sequence cube {} lies outside the window",
                cube.descriptor()
            )));
        }
    }

    let mut sums = seq.entries.clone();
    let min_level = sums.keys().next().map(|k| k.level).unwrap_or(window.level);
    for level in min_level..window.level {
        let at_level: Vec<CubeKey> = sums
            .keys()
            .filter(|k| k.level == level)
            .cloned()
            .collect();
        for key in at_level {
            let total = sums[&key];
            let parent = seq.cube(&key)?.parent();
            *sums.entry(CubeKey::of(&parent)).or_insert(0.0) += total;
        }
    }

    let mut best = f64::NEG_INFINITY;
    let mut argmax = None;
    for (key, &total) in &sums {
        let cube = seq.cube(key)?;
        let value = theta.eval(1.0 / nu.integrate(&cube)?)? * total;
        if value > best {
            best = value;
            argmax = Some(cube);
        }
    }
    Ok(CarlesonConstant {
        value: best,
        argmax,
    })
}

fn normalized_inputs(
    sigmas: &[&MeshField],
    fs: &[&MeshField],
    phis: &[GrowthFunction],
) -> Result<Vec<MeshField>> {
    if sigmas.len() != fs.len() || fs.len() != phis.len() || fs.is_empty() {
        return Err(Error::Usage(
            "need matching, nonempty weight, function, and growth lists".into(),
        ));
    }
    let mut out = Vec::with_capacity(fs.len());
    for ((f, sigma), phi) in fs.iter().zip(sigmas.iter()).zip(phis.iter()) {
        if f.values().iter().all(|&v| v == 0.0) {
            return Err(Error::Usage(
                "test functions must not vanish identically".into(),
            ));
        }
        let norm = luxemburg_norm(phi, f, sigma, NORM_TOL)?;
        if !(norm.value > 0.0 && norm.value.is_finite()) {
            return Err(Error::Usage(format!(
                "input norm {} is not usable for normalization",
                norm.value
            )));
        }
        let mut g = (*f).clone();
        for v in g.values_mut() {
            *v /= norm.value;
        }
        out.push(g);
    }
    Ok(out)
}

/// `Σ_Q λ_Q·Ψ(∏ᵢ m_{σᵢ}(gᵢ, Q))` where `gᵢ = fᵢ/‖fᵢ‖` in the Luxemburg
/// norm of `Φᵢ` against `σᵢ`. Entries are consumed in key order with
/// compensated summation, so the result is reproducible.
pub fn embedding_sum(
    seq: &CarlesonSequence,
    psi: &GrowthFunction,
    sigmas: &[&MeshField],
    fs: &[&MeshField],
    phis: &[GrowthFunction],
    window: &Window,
) -> Result<f64> {
    let gs = normalized_inputs(sigmas, fs, phis)?;
    let mut acc = Accumulator::new();
    for (key, &lambda_q) in &seq.entries {
        let cube = seq.cube(key)?;
        if !window.contains_cube(&cube) {
            return Err(Error::Usage(format!(
                "sequence cube {} lies outside the window",
                cube.descriptor()
            )));
        }
        let mut prod = 1.0f64;
        for (g, sigma) in gs.iter().zip(sigmas.iter()) {
            prod *= average(g, sigma, &cube)?;
        }
        acc.add(lambda_q * psi.eval(prod)?);
    }
    Ok(acc.total())
}

/// Both sides of the level-set inequality at threshold `λ`: the sum
/// `Σ_R 1/Θ(1/ν(R))` over the maximal level cubes of the normalized
/// inputs, and `(Φ(λ)/Ψ(λ))·ν(E_λ)` over the superlevel set, where
/// `Θ = Ψ∘Φ⁻¹` and `ν` is the auxiliary weight of the family.
#[allow(clippy::too_many_arguments)]
pub fn levelset_sum(
    sigmas: &[&MeshField],
    fs: &[&MeshField],
    phis: &[GrowthFunction],
    phi: &GrowthFunction,
    psi: &GrowthFunction,
    lambda: f64,
    beta: &Shift,
    window: &Window,
) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Usage(format!(
            "level threshold must be positive, got {lambda}"
        )));
    }
    let gs = normalized_inputs(sigmas, fs, phis)?;
    let g_refs: Vec<&MeshField> = gs.iter().collect();
    let theta = GrowthFunction::of_inverse(psi.clone(), phi.clone());
    let nu = crate::weights::nu_field(sigmas, phis, phi)?;

    let cubes = level_cubes(sigmas, &g_refs, lambda, beta, window)?;
    let mut acc = Accumulator::new();
    for cube in &cubes {
        acc.add(1.0 / theta.eval(1.0 / nu.integrate(cube)?)?);
    }
    let left = acc.total();

    let maximal = multilinear_weighted_maximal(
        sigmas,
        &g_refs,
        &CubeSet::SingleGrid(beta.clone()),
        window,
    )?;
    let nu_fine = FineField::from_mesh(&nu)?;
    let u_volume = nu.cell_volume() / 3f64.powi(window.d() as i32);
    let mut mass = Accumulator::new();
    for (m, w) in maximal
        .fine()
        .values()
        .iter()
        .zip(nu_fine.values().iter())
    {
        if *m > lambda {
            mass.add(*w);
        }
    }
    let right = phi.eval(lambda)? / psi.eval(lambda)? * (mass.total() * u_volume);
    Ok((left, right))
}

/// What each sparse entry contributes to its sequence value.
#[derive(Debug, Clone, Copy)]
pub enum SparsePayload<'a> {
    /// `λ_Q = |E_Q|`.
    LebesgueE,
    /// `λ_Q = ω(E_Q)`.
    WeightE(&'a MeshField),
    /// `λ_Q = ω(E_Q)·Ψ(m_{σ}(g, Q))`.
    PsiWeighted {
        omega: &'a MeshField,
        psi: &'a GrowthFunction,
        sigma: &'a MeshField,
        g: &'a MeshField,
    },
}

/// Builds sequence entries from a validated sparse family; cubes whose
/// payload evaluates to zero are omitted.
pub fn sequence_from_sparse(
    family: &SparseFamily,
    payload: &SparsePayload,
) -> Result<CarlesonSequence> {
    let d = family.window.d();
    let cell_volume =
        (((family.window.level - family.resolution as i32) as i64 * d as i64) as f64).exp2();
    let u_volume = cell_volume / 3f64.powi(d as i32);
    let check_mesh = |field: &MeshField, role: &str| -> Result<()> {
        if field.window != family.window || field.resolution != family.resolution {
            return Err(Error::Usage(format!(
                "{role} does not live on the family's mesh"
            )));
        }
        Ok(())
    };
    match payload {
        SparsePayload::LebesgueE => {}
        SparsePayload::WeightE(omega) => check_mesh(omega, "the weight")?,
        SparsePayload::PsiWeighted {
            omega, sigma, g, ..
        } => {
            check_mesh(omega, "the weight")?;
            check_mesh(sigma, "the pairing weight")?;
            check_mesh(g, "the pairing function")?;
        }
    }

    let mut seq = CarlesonSequence::new(family.beta.clone());
    for entry in &family.entries {
        let value = match payload {
            SparsePayload::LebesgueE => entry.e_mask.count() as f64 * u_volume,
            SparsePayload::WeightE(omega) => omega.mask_integrate(&entry.e_mask)?,
            SparsePayload::PsiWeighted {
                omega,
                psi,
                sigma,
                g,
            } => {
                omega.mask_integrate(&entry.e_mask)?
                    * psi.eval(average(g, sigma, &entry.cube)?)?
            }
        };
        seq.insert(&entry.cube, value)?;
    }
    Ok(seq)
}
