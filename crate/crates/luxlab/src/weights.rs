//! Weight classes and their constants: the auxiliary weight ν built from a
//! family of weights through a growth-function product, the Muckenhoupt
//! ladder (A_p, A₁, two A_∞ flavors, doubling), the Orlicz bump classes,
//! and reverse-Hölder diagnostics.
//!
//! Every constant is a supremum of a per-cube quantity over one of the
//! three cube sets. Cube integrals of grid cubes go through the exact
//! overlap scheme of [`MeshField::integrate`]; mesh-aligned cubes read
//! cell-level prefix tables. Suprema are parallel map-reduces with a
//! deterministic argmax: the first cube in enumeration order wins ties.

use crate::dyadic::{enumerate_cubes, DyadicCube, Shift, UnitScale, Window};
use crate::field::{make_field, FieldGenerator, FieldKind, MeshField, UPrefix};
use crate::growth::{GrowthFunction, INVERSE_TOL};
use crate::maximal::{box_rows, fractional_fine_clipped, prefix_of_fine, CubeSet, FineField};
use crate::numerics::Accumulator;
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;

/// The auxiliary weight `ν = 1/Φ(∏ᵢ Φᵢ⁻¹(1/σᵢ))`, cell by cell.
///
/// A single weight whose growth function equals the composed one returns a
/// bitwise copy of `σ₁`; all-power families use the closed form
/// `ν = ∏ σᵢ^{p/pᵢ}`; everything else inverts numerically per cell.
pub fn nu_field(
    sigmas: &[&MeshField],
    phis: &[GrowthFunction],
    phi: &GrowthFunction,
) -> Result<MeshField> {
    if sigmas.is_empty() || sigmas.len() != phis.len() {
        return Err(Error::Usage(
            "need one growth function per weight, at least one of each".into(),
        ));
    }
    for s in sigmas {
        if s.window != sigmas[0].window || s.resolution != sigmas[0].resolution {
            return Err(Error::Usage("all weights must share one mesh".into()));
        }
        if s.kind != FieldKind::Weight {
            return Err(Error::Usage(
                "the auxiliary weight is built from weight fields".into(),
            ));
        }
    }
    if sigmas.len() == 1 && *phi == phis[0] {
        return Ok(sigmas[0].clone());
    }
    let values = match power_exponents(phis, phi) {
        Some(ratios) => closed_form_nu_values(sigmas, &ratios),
        None => generic_nu_values(sigmas, phis, phi)?,
    };
    make_field(
        &sigmas[0].window,
        sigmas[0].resolution,
        FieldKind::Weight,
        &FieldGenerator::FromValues(values),
    )
}

/// For an all-power family returns the exponents `p/pᵢ`.
fn power_exponents(phis: &[GrowthFunction], phi: &GrowthFunction) -> Option<Vec<f64>> {
    let p = match phi {
        GrowthFunction::Power { p } => *p,
        _ => return None,
    };
    phis.iter()
        .map(|f| match f {
            GrowthFunction::Power { p: pi } => Some(p / pi),
            _ => None,
        })
        .collect()
}

fn closed_form_nu_values(sigmas: &[&MeshField], ratios: &[f64]) -> Vec<f64> {
    let cells = sigmas[0].cell_count();
    (0..cells)
        .map(|c| {
            sigmas
                .iter()
                .zip(ratios.iter())
                .map(|(s, &r)| s.values()[c].powf(r))
                .product()
        })
        .collect()
}

fn generic_nu_values(
    sigmas: &[&MeshField],
    phis: &[GrowthFunction],
    phi: &GrowthFunction,
) -> Result<Vec<f64>> {
    let cells = sigmas[0].cell_count();
    let mut out = Vec::with_capacity(cells);
    for c in 0..cells {
        let mut prod = 1.0f64;
        for (s, phi_i) in sigmas.iter().zip(phis.iter()) {
            prod *= phi_i.inverse(1.0 / s.values()[c], INVERSE_TOL)?;
        }
        out.push(1.0 / phi.eval(prod)?);
    }
    Ok(out)
}

/// A family of weights with their growth functions, the composed growth
/// function, and the materialized auxiliary weight ν.
#[derive(Debug, Clone)]
pub struct WeightSystem {
    pub sigmas: Vec<MeshField>,
    pub phis: Vec<GrowthFunction>,
    pub phi: GrowthFunction,
    pub nu: MeshField,
}

impl WeightSystem {
    pub fn new(sigmas: Vec<MeshField>, phis: Vec<GrowthFunction>) -> Result<Self> {
        let phi = crate::growth::product_compose(&phis)?;
        let refs: Vec<&MeshField> = sigmas.iter().collect();
        let nu = nu_field(&refs, &phis, &phi)?;
        Ok(Self {
            sigmas,
            phis,
            phi,
            nu,
        })
    }

    pub fn n(&self) -> usize {
        self.sigmas.len()
    }

    /// The auxiliary weight ν of the family.
    pub fn nu_sigma(&self) -> &MeshField {
        &self.nu
    }
}

/// Which weight-class constant to compute.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassKind {
    /// `sup avg(ω,Q)·avg(ω^{−1/(p−1)},Q)^{p−1}`, `p > 1`.
    Ap(f64),
    /// `sup avg(ω,Q)/ess-inf_Q ω` (the cell minimum over the cube).
    A1,
    /// Fujii–Wilson `sup (1/ω(Q))∫_Q M(ωχ_Q)`.
    AInfFw,
    /// Exponential `sup avg(ω,Q)·exp(avg(log(1/ω),Q))`.
    AInfExp,
    /// `sup σ(Q′)/σ(Q)` over nested pairs with `ℓ(Q′) ≤ 2ℓ(Q)`.
    Doubling,
    /// `sup ω(Q)·Ψ∘Φ⁻¹(1/ν(Q))`.
    M,
    /// `sup ω(Q)·∏ᵢ Ψ∘Φᵢ⁻¹(1/σᵢ(Q))`.
    K,
    /// `sup Ψ∘Φ⁻¹(1/ν(Q))·∫_Q Ψ(M_α(σ⃗χ_Q))ω`.
    SAlpha(f64),
    /// `sup ∏ᵢ Ψ∘Φᵢ⁻¹(1/σᵢ(Q))·∫_Q Ψ(M_α(σ⃗χ_Q))ω`.
    LAlpha(f64),
    /// `sup ω(Q)·Ψ(∏ᵢ σᵢ(Q)/|Q|^{1−α/(nd)})·Ψ(∏ᵢ Φᵢ⁻¹(1/σᵢ(Q)))`.
    AAlpha(f64),
    /// `sup (ω(Q)/|Q|)·Ψ(|Q|^{α/d}·∏ᵢ Φᵢ⁻¹(σᵢ(Q)/|Q|))`.
    ATildeAlpha(f64),
    /// The `AAlpha` bound with `1/σᵢ(Q)` replaced by the normalized
    /// geometric mean `(1/|Q|)·exp(avg(log(1/σᵢ),Q))`.
    BAlpha(f64),
    /// `sup Ψ∘Φ⁻¹(1/ν(Q))·∫_Q Ψ(∏ᵢ Φᵢ⁻¹(M(σᵢχ_Q)))`.
    W,
}

impl ClassKind {
    /// Canonical name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ap(_) => "AP",
            Self::A1 => "A1",
            Self::AInfFw => "A_INF_FW",
            Self::AInfExp => "A_INF_EXP",
            Self::Doubling => "DOUBLING",
            Self::M => "M",
            Self::K => "K",
            Self::SAlpha(_) => "S_ALPHA",
            Self::LAlpha(_) => "L_ALPHA",
            Self::AAlpha(_) => "A_ALPHA",
            Self::ATildeAlpha(_) => "A_TILDE_ALPHA",
            Self::BAlpha(_) => "B_ALPHA",
            Self::W => "W",
        }
    }

    /// Builds a kind from its command-line name plus the parameters the
    /// name calls for (`p` for `ap`, `alpha` for the fractional bumps).
    pub fn parse(kind: &str, p: Option<f64>, alpha: Option<f64>) -> Result<Self> {
        let need_alpha = |k: fn(f64) -> Self| {
            alpha
                .map(k)
                .ok_or_else(|| Error::Usage(format!("kind `{kind}` requires alpha")))
        };
        match kind {
            "ap" => p
                .map(Self::Ap)
                .ok_or_else(|| Error::Usage("kind `ap` requires p".into())),
            "a1" => Ok(Self::A1),
            "a-inf-fw" => Ok(Self::AInfFw),
            "a-inf-exp" => Ok(Self::AInfExp),
            "doubling" => Ok(Self::Doubling),
            "m" => Ok(Self::M),
            "k" => Ok(Self::K),
            "s-alpha" => need_alpha(Self::SAlpha),
            "l-alpha" => need_alpha(Self::LAlpha),
            "a-alpha" => need_alpha(Self::AAlpha),
            "a-tilde-alpha" => need_alpha(Self::ATildeAlpha),
            "b-alpha" => need_alpha(Self::BAlpha),
            "w" => Ok(Self::W),
            other => Err(Error::Parse(format!("unknown class kind `{other}`"))),
        }
    }

    fn params_json(&self) -> serde_json::Value {
        match self {
            Self::Ap(p) => serde_json::json!({ "p": p }),
            Self::SAlpha(a)
            | Self::LAlpha(a)
            | Self::AAlpha(a)
            | Self::ATildeAlpha(a)
            | Self::BAlpha(a) => serde_json::json!({ "alpha": a }),
            _ => serde_json::json!({}),
        }
    }
}

/// Where a supremum was attained. Grid cubes carry their full address;
/// mesh-aligned cubes (whose sides need not be powers of two) are reported
/// as cell boxes.
#[derive(Debug, Clone, PartialEq)]
pub enum ArgMax {
    Grid(DyadicCube),
    MeshBox { corner: Vec<usize>, side: usize },
    None,
}

impl ArgMax {
    fn json(&self) -> serde_json::Value {
        match self {
            Self::Grid(c) => serde_json::Value::String(c.descriptor()),
            Self::MeshBox { corner, side } => serde_json::Value::String(format!(
                "mesh:corner={};side={side}",
                corner
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            )),
            Self::None => serde_json::Value::Null,
        }
    }
}

/// A computed class constant: the supremum, the cube attaining it, and the
/// cube set it ranged over.
#[derive(Debug, Clone)]
pub struct ClassConstant {
    pub kind: ClassKind,
    pub value: f64,
    pub argmax: ArgMax,
    pub cube_set: CubeSet,
}

impl ClassConstant {
    /// One JSON object `{kind, params, value, argmax_cube}`.
    pub fn json_row(&self) -> String {
        serde_json::json!({
            "kind": self.kind.name(),
            "params": self.kind.params_json(),
            "value": self.value,
            "argmax_cube": self.argmax.json(),
        })
        .to_string()
    }
}

/// One enumerated cube: a grid cube or a mesh-aligned cell box.
#[derive(Debug, Clone)]
enum EnumCube {
    Grid(DyadicCube),
    MeshBox { corner: Vec<usize>, side: usize },
}

impl EnumCube {
    fn argmax(&self) -> ArgMax {
        match self {
            Self::Grid(c) => ArgMax::Grid(c.clone()),
            Self::MeshBox { corner, side } => ArgMax::MeshBox {
                corner: corner.clone(),
                side: *side,
            },
        }
    }

    /// The cube's box on the u-lattice.
    fn ubox(&self, scale: &UnitScale, window: &Window) -> Result<(Vec<i64>, i64)> {
        match self {
            Self::Grid(c) => scale.cube_box_u(c, window),
            Self::MeshBox { corner, side } => Ok((
                corner.iter().map(|&c| 3 * c as i64).collect(),
                3 * *side as i64,
            )),
        }
    }

    /// Exact cube volume: `2^{kd}` for grid cubes, `t^d`·cell volume for
    /// mesh boxes.
    fn volume(&self, d: usize, cell_volume: f64) -> f64 {
        match self {
            Self::Grid(c) => ((c.level as i64 * d as i64) as f64).exp2(),
            Self::MeshBox { side, .. } => (*side as f64).powi(d as i32) * cell_volume,
        }
    }
}

/// All cubes of the requested set inside the window, in the deterministic
/// order suprema are resolved in: grids by shift then ascending level,
/// mesh boxes by ascending side then row-major position.
fn enumerate_set(
    cube_set: &CubeSet,
    window: &Window,
    resolution: u32,
) -> Result<Vec<EnumCube>> {
    let scale = UnitScale::new(window, resolution)?;
    let d = window.d();
    let k_min = scale.cell_log2;
    let k_max = window.level;
    let mut out = Vec::new();
    match cube_set {
        CubeSet::SingleGrid(beta) => {
            out.extend(
                enumerate_cubes(window, beta, k_min, k_max)?
                    .into_iter()
                    .map(EnumCube::Grid),
            );
        }
        CubeSet::AllGrids => {
            for beta in Shift::all(d) {
                out.extend(
                    enumerate_cubes(window, &beta, k_min, k_max)?
                        .into_iter()
                        .map(EnumCube::Grid),
                );
            }
        }
        CubeSet::AllMeshAligned => {
            let cells = 1usize << resolution;
            for side in 1..=cells {
                let positions = cells - side + 1;
                let mut pos = vec![0usize; d];
                loop {
                    out.push(EnumCube::MeshBox {
                        corner: pos.clone(),
                        side,
                    });
                    let mut axis = d;
                    let mut advanced = false;
                    while axis > 0 {
                        axis -= 1;
                        pos[axis] += 1;
                        if pos[axis] < positions {
                            advanced = true;
                            break;
                        }
                        pos[axis] = 0;
                    }
                    if !advanced {
                        break;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Integrals of one field over enumerated cubes: grid cubes go through the
/// exact overlap scheme, mesh boxes through a cell-level prefix table
/// (built only when the enumeration contains mesh boxes).
struct CubeSums<'a> {
    field: &'a MeshField,
    prefix: Option<UPrefix>,
}

impl<'a> CubeSums<'a> {
    fn new(field: &'a MeshField, mesh_boxes: bool) -> Self {
        let prefix = mesh_boxes.then(|| {
            let cells = field.cells_per_axis();
            let vol = field.cell_volume();
            let values = field.values();
            UPrefix::build(cells, field.d(), |c| {
                let flat = c.iter().fold(0usize, |acc, &x| acc * cells + x as usize);
                values[flat] * vol
            })
        });
        Self { field, prefix }
    }

    fn over(&self, cube: &EnumCube) -> Result<f64> {
        match cube {
            EnumCube::Grid(c) => self.field.integrate(c),
            EnumCube::MeshBox { corner, side } => {
                let table = self.prefix.as_ref().ok_or_else(|| {
                    Error::Usage("mesh-box integral without a prefix table".into())
                })?;
                let lo: Vec<i64> = corner.iter().map(|&c| c as i64).collect();
                Ok(table.box_sum(&lo, *side as i64))
            }
        }
    }
}

/// Parallel supremum with the first-in-order argmax. Cubes whose value is
/// `-∞` are treated as "no admissible pair" and skipped; an empty or fully
/// skipped enumeration yields 0 with no argmax.
fn sup_over<F>(
    kind: ClassKind,
    cubes: &[EnumCube],
    cube_set: &CubeSet,
    value: F,
) -> Result<ClassConstant>
where
    F: Fn(&EnumCube) -> Result<f64> + Sync,
{
    let values: Vec<f64> = cubes.par_iter().map(&value).collect::<Result<_>>()?;
    let mut best = f64::NEG_INFINITY;
    let mut argmax = ArgMax::None;
    for (cube, &v) in cubes.iter().zip(values.iter()) {
        if v > best {
            best = v;
            argmax = cube.argmax();
        }
    }
    if best == f64::NEG_INFINITY {
        best = 0.0;
        argmax = ArgMax::None;
    }
    Ok(ClassConstant {
        kind,
        value: best,
        argmax,
        cube_set: cube_set.clone(),
    })
}

fn check_weight_mesh(field: &MeshField, window: &Window, role: &str) -> Result<()> {
    if field.window != *window {
        return Err(Error::Usage(format!(
            "{role} does not live on the requested window"
        )));
    }
    if field.kind != FieldKind::Weight {
        return Err(Error::Usage(format!("{role} must be a weight field")));
    }
    Ok(())
}

/// The field of `log(1/values)`, used by the exponential and geometric-mean
/// conditions. Stored as a plain function field: logarithms may be negative.
fn log_reciprocal_field(field: &MeshField) -> Result<MeshField> {
    let values = field.values().iter().map(|&v| -(v.ln())).collect();
    make_field(
        &field.window,
        field.resolution,
        FieldKind::Function,
        &FieldGenerator::FromValues(values),
    )
}

/// `Σ_{u ∈ box} Ψ(values[u])·weight[u]` (weight 1 when absent), without the
/// u-cell volume factor.
fn psi_box_sum(
    psi: &GrowthFunction,
    values: &[f64],
    weight: Option<&[f64]>,
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
            match psi.eval(values[u]) {
                Ok(p) => acc.add(match weight {
                    Some(w) => p * w[u],
                    None => p,
                }),
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

/// Minimum cell value over the cells meeting a u-box.
fn min_cell_over(field: &MeshField, corner_u: &[i64], side_u: i64) -> f64 {
    let d = field.d();
    let cells = field.cells_per_axis() as i64;
    let lo: Vec<i64> = corner_u.iter().map(|&a| a.div_euclid(3)).collect();
    let hi: Vec<i64> = corner_u
        .iter()
        .map(|&a| ((a + side_u + 2).div_euclid(3)).min(cells))
        .collect();
    let mut min = f64::INFINITY;
    let mut coords = lo.clone();
    loop {
        let flat = coords
            .iter()
            .fold(0usize, |acc, &c| acc * cells as usize + c as usize);
        let v = field.values()[flat];
        if v < min {
            min = v;
        }
        let mut axis = d;
        let mut advanced = false;
        while axis > 0 {
            axis -= 1;
            if coords[axis] + 1 < hi[axis] {
                coords[axis] += 1;
                advanced = true;
                break;
            }
            coords[axis] = lo[axis];
        }
        if !advanced {
            break;
        }
    }
    min
}

/// Muckenhoupt-family constants of a single weight.
pub fn muckenhoupt_constant(
    kind: ClassKind,
    omega: &MeshField,
    cube_set: &CubeSet,
    window: &Window,
) -> Result<ClassConstant> {
    check_weight_mesh(omega, window, "the weight")?;
    let resolution = omega.resolution;
    let scale = omega.scale()?;
    let d = omega.d();
    let mesh_boxes = *cube_set == CubeSet::AllMeshAligned;
    let cubes = enumerate_set(cube_set, window, resolution)?;
    let cell_volume = omega.cell_volume();
    let omega_sums = CubeSums::new(omega, mesh_boxes);

    match kind {
        ClassKind::Ap(p) => {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::Usage(format!(
                    "the A_p condition needs p > 1, got {p}"
                )));
            }
            let dual_exponent = -1.0 / (p - 1.0);
            let dual = make_field(
                window,
                resolution,
                FieldKind::Weight,
                &FieldGenerator::FromValues(
                    omega.values().iter().map(|&v| v.powf(dual_exponent)).collect(),
                ),
            )?;
            let dual_sums = CubeSums::new(&dual, mesh_boxes);
            sup_over(kind, &cubes, cube_set, |cube| {
                let vol = cube.volume(d, cell_volume);
                let avg = omega_sums.over(cube)? / vol;
                let dual_avg = dual_sums.over(cube)? / vol;
                Ok(avg * dual_avg.powf(p - 1.0))
            })
        }
        ClassKind::A1 => sup_over(kind, &cubes, cube_set, |cube| {
            let vol = cube.volume(d, cell_volume);
            let (corner_u, side_u) = cube.ubox(&scale, window)?;
            let avg = omega_sums.over(cube)? / vol;
            Ok(avg / min_cell_over(omega, &corner_u, side_u))
        }),
        ClassKind::AInfFw => {
            let u_volume = cell_volume / 3f64.powi(d as i32);
            let num = prefix_of_fine(&FineField::from_mesh(omega)?, u_volume);
            let per = scale.per_axis as usize;
            sup_over(kind, &cubes, cube_set, |cube| {
                let (corner_u, side_u) = cube.ubox(&scale, window)?;
                let maximal = fractional_fine_clipped(
                    std::slice::from_ref(&num),
                    &[Some((corner_u.clone(), side_u))],
                    0.0,
                    &CubeSet::AllGrids,
                    window,
                    resolution,
                    cell_volume,
                )?;
                let mut acc = Accumulator::new();
                box_rows(per, d, &corner_u, side_u, |base, len| {
                    for &v in &maximal.values()[base..base + len] {
                        acc.add(v);
                    }
                });
                Ok(acc.total() * u_volume / omega_sums.over(cube)?)
            })
        }
        ClassKind::AInfExp => {
            let log_recip = log_reciprocal_field(omega)?;
            let log_sums = CubeSums::new(&log_recip, mesh_boxes);
            sup_over(kind, &cubes, cube_set, |cube| {
                let vol = cube.volume(d, cell_volume);
                let avg = omega_sums.over(cube)? / vol;
                Ok(avg * (log_sums.over(cube)? / vol).exp())
            })
        }
        ClassKind::Doubling => doubling_constant(omega, cube_set, window, &omega_sums),
        other => Err(Error::Usage(format!(
            "kind {} needs the full weight system; use the pair-class entry point",
            other.name()
        ))),
    }
}

/// Doubling supremum `σ(Q′)/σ(Q)` over nested pairs `Q ⊂ Q′` with
/// `ℓ(Q′) ≤ 2ℓ(Q)`; the reported argmax is the outer cube of the extremal
/// pair.
fn doubling_constant(
    omega: &MeshField,
    cube_set: &CubeSet,
    window: &Window,
    omega_sums: &CubeSums,
) -> Result<ClassConstant> {
    let resolution = omega.resolution;
    let scale = omega.scale()?;
    let d = omega.d();
    let kind = ClassKind::Doubling;

    if *cube_set == CubeSet::AllMeshAligned {
        let cubes = enumerate_set(cube_set, window, resolution)?;
        return sup_over(kind, &cubes, cube_set, |cube| {
            let (corner, side) = match cube {
                EnumCube::MeshBox { corner, side } => (corner, *side),
                EnumCube::Grid(_) => unreachable!("mesh enumeration yields boxes"),
            };
            let inner_side = side.div_ceil(2);
            let outer = omega_sums.over(cube)?;
            let mut min_inner = f64::INFINITY;
            let slots = side - inner_side + 1;
            let mut offset = vec![0usize; d];
            loop {
                let shifted: Vec<usize> = corner
                    .iter()
                    .zip(offset.iter())
                    .map(|(&c, &o)| c + o)
                    .collect();
                let inner = omega_sums.over(&EnumCube::MeshBox {
                    corner: shifted,
                    side: inner_side,
                })?;
                if inner < min_inner {
                    min_inner = inner;
                }
                let mut axis = d;
                let mut advanced = false;
                while axis > 0 {
                    axis -= 1;
                    offset[axis] += 1;
                    if offset[axis] < slots {
                        advanced = true;
                        break;
                    }
                    offset[axis] = 0;
                }
                if !advanced {
                    break;
                }
            }
            Ok(outer / min_inner)
        });
    }

    let betas = match cube_set {
        CubeSet::SingleGrid(beta) => vec![beta.clone()],
        CubeSet::AllGrids => Shift::all(d),
        CubeSet::AllMeshAligned => unreachable!("handled above"),
    };
    let k_min = scale.cell_log2;
    let k_max = window.level;

    // Cache every grid cube's integral, keyed by its u-corner, per level
    // and shift; cross-grid lookups then reduce to corner arithmetic.
    struct LevelGrid {
        sigma: HashMap<Vec<i64>, f64>,
        residue: Vec<i64>,
        side: i64,
    }
    let mut levels: HashMap<(i32, usize), LevelGrid> = HashMap::new();
    for (bi, beta) in betas.iter().enumerate() {
        for k in k_min..=k_max {
            let mut sigma = HashMap::new();
            let mut residue = Vec::new();
            let mut side = 0i64;
            for cube in enumerate_cubes(window, beta, k, k)? {
                let (corner, s) = scale.cube_box_u(&cube, window)?;
                if residue.is_empty() {
                    residue = corner.iter().map(|&c| c.rem_euclid(s)).collect();
                    side = s;
                }
                sigma.insert(corner, omega.integrate(&cube)?);
            }
            if !sigma.is_empty() {
                levels.insert((k, bi), LevelGrid { sigma, residue, side });
            }
        }
    }

    let mut outer = Vec::new();
    for beta in &betas {
        if k_min + 1 <= k_max {
            outer.extend(
                enumerate_cubes(window, beta, k_min + 1, k_max)?
                    .into_iter()
                    .map(EnumCube::Grid),
            );
        }
    }

    sup_over(kind, &outer, cube_set, |cube| {
        let grid_cube = match cube {
            EnumCube::Grid(c) => c,
            EnumCube::MeshBox { .. } => unreachable!("grid enumeration"),
        };
        let (corner, side) = scale.cube_box_u(grid_cube, window)?;
        let outer_mass = omega.integrate(grid_cube)?;
        let half = side / 2;
        let k = grid_cube.level - 1;
        let mut min_inner = f64::INFINITY;
        for bi in 0..betas.len() {
            let Some(grid) = levels.get(&(k, bi)) else {
                continue;
            };
            // Candidate contained tiles: per axis the smallest tile corner
            // at or above the outer corner, and one tile further if it
            // still fits.
            let mut axis_choices: Vec<Vec<i64>> = Vec::with_capacity(d);
            for j in 0..d {
                let r = grid.residue[j];
                let c0 = r + (corner[j] - r).div_euclid(grid.side) * grid.side;
                let c0 = if c0 < corner[j] { c0 + grid.side } else { c0 };
                let mut choices = Vec::new();
                if c0 + half <= corner[j] + side {
                    choices.push(c0);
                    let c1 = c0 + grid.side;
                    if c1 + half <= corner[j] + side {
                        choices.push(c1);
                    }
                }
                axis_choices.push(choices);
            }
            if axis_choices.iter().any(|c| c.is_empty()) {
                continue;
            }
            let mut pick = vec![0usize; d];
            loop {
                let candidate: Vec<i64> = pick
                    .iter()
                    .enumerate()
                    .map(|(j, &i)| axis_choices[j][i])
                    .collect();
                if let Some(&mass) = grid.sigma.get(&candidate) {
                    if mass < min_inner {
                        min_inner = mass;
                    }
                }
                let mut axis = d;
                let mut advanced = false;
                while axis > 0 {
                    axis -= 1;
                    pick[axis] += 1;
                    if pick[axis] < axis_choices[axis].len() {
                        advanced = true;
                        break;
                    }
                    pick[axis] = 0;
                }
                if !advanced {
                    break;
                }
            }
        }
        if min_inner.is_infinite() {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(outer_mass / min_inner)
    })
}

/// Bump-class constants of a weight family against a target weight.
pub fn pair_class_constant(
    kind: ClassKind,
    ws: &WeightSystem,
    omega: &MeshField,
    psi: &GrowthFunction,
    cube_set: &CubeSet,
    window: &Window,
) -> Result<ClassConstant> {
    check_weight_mesh(omega, window, "the target weight")?;
    for s in &ws.sigmas {
        if s.window != omega.window || s.resolution != omega.resolution {
            return Err(Error::Usage(
                "weight system and target weight must share one mesh".into(),
            ));
        }
    }
    let n = ws.n();
    let d = window.d();
    let resolution = omega.resolution;
    let scale = omega.scale()?;
    let cell_volume = omega.cell_volume();
    let mesh_boxes = *cube_set == CubeSet::AllMeshAligned;
    let cubes = enumerate_set(cube_set, window, resolution)?;
    let omega_sums = CubeSums::new(omega, mesh_boxes);
    let sigma_sums: Vec<CubeSums> = ws
        .sigmas
        .iter()
        .map(|s| CubeSums::new(s, mesh_boxes))
        .collect();

    let check_alpha = |alpha: f64| -> Result<()> {
        if !(alpha >= 0.0 && alpha < (n * d) as f64) {
            return Err(Error::Usage(format!(
                "fractional order must satisfy 0 ≤ α < n·d = {}, got {alpha}",
                n * d
            )));
        }
        Ok(())
    };

    match kind {
        ClassKind::M => {
            let theta = GrowthFunction::of_inverse(psi.clone(), ws.phi.clone());
            let nu_sums = CubeSums::new(&ws.nu, mesh_boxes);
            sup_over(kind, &cubes, cube_set, |cube| {
                Ok(omega_sums.over(cube)? * theta.eval(1.0 / nu_sums.over(cube)?)?)
            })
        }
        ClassKind::K => {
            let thetas: Vec<GrowthFunction> = ws
                .phis
                .iter()
                .map(|phi_i| GrowthFunction::of_inverse(psi.clone(), phi_i.clone()))
                .collect();
            sup_over(kind, &cubes, cube_set, |cube| {
                let mut prod = omega_sums.over(cube)?;
                for (theta, sums) in thetas.iter().zip(sigma_sums.iter()) {
                    prod *= theta.eval(1.0 / sums.over(cube)?)?;
                }
                Ok(prod)
            })
        }
        ClassKind::SAlpha(alpha) | ClassKind::LAlpha(alpha) => {
            check_alpha(alpha)?;
            let u_volume = cell_volume / 3f64.powi(d as i32);
            let nums: Vec<UPrefix> = ws
                .sigmas
                .iter()
                .map(|s| Ok(prefix_of_fine(&FineField::from_mesh(s)?, u_volume)))
                .collect::<Result<_>>()?;
            let omega_fine = FineField::from_mesh(omega)?;
            let per = scale.per_axis as usize;
            let s_kind = matches!(kind, ClassKind::SAlpha(_));
            let theta = GrowthFunction::of_inverse(psi.clone(), ws.phi.clone());
            let thetas: Vec<GrowthFunction> = ws
                .phis
                .iter()
                .map(|phi_i| GrowthFunction::of_inverse(psi.clone(), phi_i.clone()))
                .collect();
            let nu_sums = CubeSums::new(&ws.nu, mesh_boxes);
            sup_over(kind, &cubes, cube_set, |cube| {
                let (corner_u, side_u) = cube.ubox(&scale, window)?;
                let clips: Vec<Option<(Vec<i64>, i64)>> =
                    (0..n).map(|_| Some((corner_u.clone(), side_u))).collect();
                let maximal = fractional_fine_clipped(
                    &nums,
                    &clips,
                    alpha,
                    &CubeSet::AllGrids,
                    window,
                    resolution,
                    cell_volume,
                )?;
                let integral = psi_box_sum(
                    psi,
                    maximal.values(),
                    Some(omega_fine.values()),
                    per,
                    d,
                    &corner_u,
                    side_u,
                )? * u_volume;
                let prefactor = if s_kind {
                    theta.eval(1.0 / nu_sums.over(cube)?)?
                } else {
                    let mut prod = 1.0f64;
                    for (theta_i, sums) in thetas.iter().zip(sigma_sums.iter()) {
                        prod *= theta_i.eval(1.0 / sums.over(cube)?)?;
                    }
                    prod
                };
                Ok(prefactor * integral)
            })
        }
        ClassKind::AAlpha(alpha) | ClassKind::BAlpha(alpha) => {
            check_alpha(alpha)?;
            let size_exponent = 1.0 - alpha / (n as f64 * d as f64);
            let geometric = matches!(kind, ClassKind::BAlpha(_));
            let log_fields: Vec<MeshField> = if geometric {
                ws.sigmas
                    .iter()
                    .map(log_reciprocal_field)
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            let log_field_sums: Vec<CubeSums> = log_fields
                .iter()
                .map(|f| CubeSums::new(f, mesh_boxes))
                .collect();
            let phis = ws.phis.clone();
            sup_over(kind, &cubes, cube_set, |cube| {
                let vol = cube.volume(d, cell_volume);
                let mut size_prod = 1.0f64;
                let mut bump_prod = 1.0f64;
                for (i, sums) in sigma_sums.iter().enumerate() {
                    let mass = sums.over(cube)?;
                    size_prod *= mass / vol.powf(size_exponent);
                    let inv_arg = if geometric {
                        (log_field_sums[i].over(cube)? / vol).exp() / vol
                    } else {
                        1.0 / mass
                    };
                    bump_prod *= phis[i].inverse(inv_arg, INVERSE_TOL)?;
                }
                Ok(omega_sums.over(cube)? * psi.eval(size_prod)? * psi.eval(bump_prod)?)
            })
        }
        ClassKind::ATildeAlpha(alpha) => {
            check_alpha(alpha)?;
            let alpha_over_d = alpha / d as f64;
            let phis = ws.phis.clone();
            sup_over(kind, &cubes, cube_set, |cube| {
                let vol = cube.volume(d, cell_volume);
                let mut prod = vol.powf(alpha_over_d);
                for (phi_i, sums) in phis.iter().zip(sigma_sums.iter()) {
                    prod *= phi_i.inverse(sums.over(cube)? / vol, INVERSE_TOL)?;
                }
                Ok(omega_sums.over(cube)? / vol * psi.eval(prod)?)
            })
        }
        other => Err(Error::Usage(format!(
            "kind {} is not a pair-class constant",
            other.name()
        ))),
    }
}

/// The testing constant whose integrand inverts each growth function at the
/// localized maximal function of its own weight.
pub fn w_class_constant(
    ws: &WeightSystem,
    psi: &GrowthFunction,
    cube_set: &CubeSet,
    window: &Window,
) -> Result<ClassConstant> {
    let first = ws
        .sigmas
        .first()
        .ok_or_else(|| Error::Usage("the weight system is empty".into()))?;
    check_weight_mesh(first, window, "the weight system")?;
    let resolution = first.resolution;
    let scale = first.scale()?;
    let d = window.d();
    let cell_volume = first.cell_volume();
    let u_volume = cell_volume / 3f64.powi(d as i32);
    let per = scale.per_axis as usize;
    let mesh_boxes = *cube_set == CubeSet::AllMeshAligned;
    let cubes = enumerate_set(cube_set, window, resolution)?;

    let nums: Vec<UPrefix> = ws
        .sigmas
        .iter()
        .map(|s| Ok(prefix_of_fine(&FineField::from_mesh(s)?, u_volume)))
        .collect::<Result<_>>()?;
    let theta = GrowthFunction::of_inverse(psi.clone(), ws.phi.clone());
    let nu_sums = CubeSums::new(&ws.nu, mesh_boxes);
    let phis = ws.phis.clone();

    sup_over(ClassKind::W, &cubes, cube_set, |cube| {
        let (corner_u, side_u) = cube.ubox(&scale, window)?;
        // One localized Hardy–Littlewood maximal per weight.
        let maximals: Vec<FineField> = nums
            .iter()
            .map(|num| {
                fractional_fine_clipped(
                    std::slice::from_ref(num),
                    &[Some((corner_u.clone(), side_u))],
                    0.0,
                    &CubeSet::AllGrids,
                    window,
                    resolution,
                    cell_volume,
                )
            })
            .collect::<Result<_>>()?;
        let mut acc = Accumulator::new();
        let mut fail: Option<Error> = None;
        box_rows(per, d, &corner_u, side_u, |base, len| {
            if fail.is_some() {
                return;
            }
            for u in base..base + len {
                let mut prod = 1.0f64;
                for (phi_i, m) in phis.iter().zip(maximals.iter()) {
                    match phi_i.inverse(m.values()[u], INVERSE_TOL) {
                        Ok(x) => prod *= x,
                        Err(e) => {
                            fail = Some(e);
                            return;
                        }
                    }
                }
                match psi.eval(prod) {
                    Ok(p) => acc.add(p),
                    Err(e) => {
                        fail = Some(e);
                        return;
                    }
                }
            }
        });
        if let Some(e) = fail {
            return Err(e);
        }
        Ok(theta.eval(1.0 / nu_sums.over(cube)?)? * acc.total() * u_volume)
    })
}

/// Extremes of the compatibility product `Φ(∏ᵢ Φᵢ⁻¹(1/σᵢ(Q)))·ν(Q)` over a
/// cube set, with the cubes attaining them.
#[derive(Debug, Clone)]
pub struct ReverseHolderReport {
    pub upper: f64,
    pub lower: f64,
    pub arg_upper: ArgMax,
    pub arg_lower: ArgMax,
}

/// Scans the compatibility product over the cube set. Values near 1 mean
/// the family's integrated inverses track ν's cube masses; the lower end
/// bounds the constant in `1/ν(Q) ≤ C·Φ(∏ᵢ Φᵢ⁻¹(1/σᵢ(Q)))`.
pub fn reverse_holder_check(
    ws: &WeightSystem,
    cube_set: &CubeSet,
    window: &Window,
) -> Result<ReverseHolderReport> {
    let first = ws
        .sigmas
        .first()
        .ok_or_else(|| Error::Usage("the weight system is empty".into()))?;
    check_weight_mesh(first, window, "the weight system")?;
    let resolution = first.resolution;
    let mesh_boxes = *cube_set == CubeSet::AllMeshAligned;
    let cubes = enumerate_set(cube_set, window, resolution)?;
    let sigma_sums: Vec<CubeSums> = ws
        .sigmas
        .iter()
        .map(|s| CubeSums::new(s, mesh_boxes))
        .collect();
    let nu_sums = CubeSums::new(&ws.nu, mesh_boxes);

    let values: Vec<f64> = cubes
        .par_iter()
        .map(|cube| {
            let mut prod = 1.0f64;
            for (phi_i, sums) in ws.phis.iter().zip(sigma_sums.iter()) {
                prod *= phi_i.inverse(1.0 / sums.over(cube)?, INVERSE_TOL)?;
            }
            Ok(ws.phi.eval(prod)? * nu_sums.over(cube)?)
        })
        .collect::<Result<_>>()?;

    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::INFINITY;
    let mut arg_upper = ArgMax::None;
    let mut arg_lower = ArgMax::None;
    for (cube, &v) in cubes.iter().zip(values.iter()) {
        if v > upper {
            upper = v;
            arg_upper = cube.argmax();
        }
        if v < lower {
            lower = v;
            arg_lower = cube.argmax();
        }
    }
    Ok(ReverseHolderReport {
        upper,
        lower,
        arg_upper,
        arg_lower,
    })
}
