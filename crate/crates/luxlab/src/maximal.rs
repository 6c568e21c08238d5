//! Maximal operators on mesh fields: the weighted multilinear maximal
//! function, its fractional variant, the logarithmic maximal function,
//! level-cube selection, sparse decomposition, and weak-type profiles.
//!
//! All suprema run over one of three cube sets: a single shifted grid, the
//! union of all `2^d` shifted grids, or every mesh-aligned cube (the
//! exhaustive oracle mode). Cube averages are computed from prefix-sum
//! tables on the u-lattice (thirds of a mesh cell), so shifted cubes see
//! exact piecewise-constant integrals. Every consumer of a cube value —
//! the pointwise supremum, level-cube selection, sparse decomposition —
//! goes through one shared evaluator, so superlevel sets of the computed
//! field match the selected cube unions bit for bit.

use crate::dyadic::{
    enumerate_cubes, grid_roots, CellMask, DyadicCube, Shift, SparseEntry, SparseFamily,
    UnitScale, Window,
};
use crate::field::{make_field, FieldGenerator, FieldKind, MeshField, UPrefix};
use crate::growth::GrowthFunction;
use crate::numerics::Accumulator;
use crate::orlicz::{luxemburg_norm, NORM_TOL};
use crate::{Error, Result};
use std::collections::HashMap;

/// Which cubes a maximal operator ranges over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CubeSet {
    /// Cubes of one shifted dyadic grid.
    SingleGrid(Shift),
    /// Pointwise max over all `2^d` shifted grids.
    AllGrids,
    /// Every mesh-aligned cube (any position, any side in whole cells):
    /// the exhaustive oracle, quadratic in the mesh size.
    AllMeshAligned,
}

/// A function resolved on the u-lattice: `(3·2^L)^d` values, row-major
/// with axis 0 most significant. Inputs to the maximal operators live here
/// so that products and cube-restrictions (which cut at u-boundaries for
/// shifted cubes) stay exact.
#[derive(Debug, Clone)]
pub struct FineField {
    pub per_axis: usize,
    pub d: usize,
    values: Vec<f64>,
}

impl FineField {
    fn new(per_axis: usize, d: usize) -> Self {
        Self {
            per_axis,
            d,
            values: vec![0.0; per_axis.pow(d as u32)],
        }
    }

    /// Spreads a mesh field onto the u-lattice (each cell's value fills
    /// its `3^d` u-cells).
    pub fn from_mesh(field: &MeshField) -> Result<Self> {
        Self::from_mesh_with(field, |v| v)
    }

    /// `|f|·σ` on the u-lattice, the numerator input of weighted averages.
    pub fn product_of(f: &MeshField, sigma: &MeshField) -> Result<Self> {
        if f.window != sigma.window || f.resolution != sigma.resolution {
            return Err(Error::Usage(
                "product inputs must share one mesh".into(),
            ));
        }
        let sv = sigma.values().to_vec();
        Self::from_mesh_indexed(f, move |flat, v| v.abs() * sv[flat])
    }

    /// Mesh field restricted to a u-mask: zero outside.
    pub fn from_mesh_masked(field: &MeshField, mask: &CellMask) -> Result<Self> {
        let scale = field.scale()?;
        if mask.per_axis != scale.per_axis || mask.d != field.d() {
            return Err(Error::Usage(
                "mask resolution does not match the field mesh".into(),
            ));
        }
        let mut fine = Self::from_mesh(field)?;
        for (u, v) in fine.values.iter_mut().enumerate() {
            if !mask.get_flat(u) {
                *v = 0.0;
            }
        }
        Ok(fine)
    }

    fn from_mesh_with(field: &MeshField, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_mesh_indexed(field, move |_, v| f(v))
    }

    fn from_mesh_indexed(field: &MeshField, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let scale = field.scale()?;
        let per = scale.per_axis as usize;
        let d = field.d();
        let cells = field.cells_per_axis();
        let values = field.values();
        let mut fine = Self::new(per, d);
        let mut coords = vec![0usize; d];
        for u in 0..fine.values.len() {
            let mut rest = u;
            for j in (0..d).rev() {
                coords[j] = rest % per;
                rest /= per;
            }
            let flat = coords
                .iter()
                .fold(0usize, |acc, &c| acc * cells + c / 3);
            fine.values[u] = f(flat, values[flat]);
        }
        Ok(fine)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Samples the u-lattice at mesh-cell centers into a mesh field.
    pub fn sample_to_mesh(&self, window: &Window, resolution: u32) -> Result<MeshField> {
        let cells = 1usize << resolution;
        if self.per_axis != 3 * cells || window.d() != self.d {
            return Err(Error::Usage(
                "fine field does not match the requested mesh".into(),
            ));
        }
        let mut out = Vec::with_capacity(cells.pow(self.d as u32));
        let mut coords = vec![0usize; self.d];
        for _ in 0..cells.pow(self.d as u32) {
            let u = coords
                .iter()
                .fold(0usize, |acc, &c| acc * self.per_axis + 3 * c + 1);
            out.push(self.values[u]);
            let mut axis = self.d;
            while axis > 0 {
                axis -= 1;
                coords[axis] += 1;
                if coords[axis] < cells {
                    break;
                }
                coords[axis] = 0;
            }
        }
        make_field(window, resolution, FieldKind::Function, &FieldGenerator::FromValues(out))
    }
}

/// A computed maximal function: the mesh sampling, the full u-resolution
/// values, and the parameters that produced it.
#[derive(Debug, Clone)]
pub struct MaximalResult {
    pub field: MeshField,
    pub cube_set: CubeSet,
    pub alpha: f64,
    pub n: usize,
    fine: FineField,
}

impl MaximalResult {
    pub fn fine(&self) -> &FineField {
        &self.fine
    }
}

/// The shared cube-value arithmetic. Fractional and logarithmic tables
/// hold u-cell *masses* (value · u-cell volume), so box sums are integrals
/// over u-boxes; the weighted variant stores unscaled value sums because
/// its averages are ratios in which the volume factor cancels.
enum Evaluator {
    /// `∏ᵢ (∫_Q |fᵢ|σᵢ) / (∫_Q σᵢ)`.
    Weighted { nums: Vec<UPrefix>, dens: Vec<UPrefix> },
    /// `|Q|^{α/d} ∏ᵢ |Q|^{−1} ∫_{Q∩clipᵢ} inputᵢ` with exact cube volumes;
    /// a `None` clip leaves that factor's integral over all of `Q`. Clips
    /// realize cube-restricted inputs `σᵢ·χ_R` without rebuilding tables.
    Fractional {
        nums: Vec<UPrefix>,
        clips: Vec<Option<(Vec<i64>, i64)>>,
        alpha_over_d: f64,
        cell_volume: f64,
        d: usize,
    },
    /// `exp(|Q|^{−1} ∫_Q ln input)`, zero as soon as the box touches a
    /// zero cell (tracked in a separate zero-count table so logarithms of
    /// zero never enter the sums).
    Log {
        logs: UPrefix,
        zeros: UPrefix,
        cell_volume: f64,
        d: usize,
    },
}

impl Evaluator {
    /// Exact volume of a cube of `side_u` u-cells per axis: `side_u` is
    /// always `3t` for an integer `t` of mesh cells, so the volume is
    /// `t^d · cellvolume`, a float-exact product.
    fn volume(side_u: i64, d: usize, cell_volume: f64) -> f64 {
        let t = (side_u / 3) as f64;
        t.powi(d as i32) * cell_volume
    }

    fn value(&self, corner_u: &[i64], side_u: i64) -> f64 {
        match self {
            Self::Weighted { nums, dens } => {
                let mut prod = 1.0f64;
                for (num, den) in nums.iter().zip(dens.iter()) {
                    prod *= num.box_sum(corner_u, side_u) / den.box_sum(corner_u, side_u);
                }
                prod
            }
            Self::Fractional {
                nums,
                clips,
                alpha_over_d,
                cell_volume,
                d,
            } => {
                let vol = Self::volume(side_u, *d, *cell_volume);
                let mut prod = 1.0f64;
                for (num, clip) in nums.iter().zip(clips.iter()) {
                    let integral = match clip {
                        None => num.box_sum(corner_u, side_u),
                        Some((c_corner, c_side)) => {
                            let lo: Vec<i64> = corner_u
                                .iter()
                                .zip(c_corner.iter())
                                .map(|(&a, &b)| a.max(b))
                                .collect();
                            let hi: Vec<i64> = corner_u
                                .iter()
                                .zip(c_corner.iter())
                                .map(|(&a, &b)| (a + side_u).min(b + c_side))
                                .collect();
                            num.rect_sum(&lo, &hi)
                        }
                    };
                    prod *= integral / vol;
                }
                prod * vol.powf(*alpha_over_d)
            }
            Self::Log {
                logs,
                zeros,
                cell_volume,
                d,
            } => {
                if zeros.box_sum(corner_u, side_u) > 0.5 {
                    return 0.0;
                }
                let vol = Self::volume(side_u, *d, *cell_volume);
                (logs.box_sum(corner_u, side_u) / vol).exp()
            }
        }
    }
}

pub(crate) fn prefix_of_fine(fine: &FineField, u_volume: f64) -> UPrefix {
    let per = fine.per_axis;
    let d = fine.d;
    let values = &fine.values;
    UPrefix::build(per, d, |u| {
        let flat = u.iter().fold(0usize, |acc, &c| acc * per + c as usize);
        values[flat] * u_volume
    })
}

/// Context shared by one maximal computation.
struct Sweep<'a> {
    window: &'a Window,
    resolution: u32,
    scale: UnitScale,
    d: usize,
}

impl<'a> Sweep<'a> {
    fn new(window: &'a Window, resolution: u32) -> Result<Self> {
        Ok(Self {
            window,
            resolution,
            scale: UnitScale::new(window, resolution)?,
            d: window.d(),
        })
    }

    fn run(&self, eval: &Evaluator, cube_set: &CubeSet) -> Result<FineField> {
        match cube_set {
            CubeSet::SingleGrid(beta) => self.pushdown(eval, beta),
            CubeSet::AllGrids => {
                let mut best: Option<FineField> = None;
                for beta in Shift::all(self.d) {
                    let one = self.pushdown(eval, &beta)?;
                    best = Some(match best {
                        None => one,
                        Some(mut acc) => {
                            for (a, b) in acc.values.iter_mut().zip(one.values.iter()) {
                                if *b > *a {
                                    *a = *b;
                                }
                            }
                            acc
                        }
                    });
                }
                Ok(best.expect("at least one grid"))
            }
            CubeSet::AllMeshAligned => self.mesh_aligned(eval),
        }
    }

    /// Single-grid supremum by top-down propagation: every cube's running
    /// ancestor max is written over its u-box, levels descending, so each
    /// u-cell ends with the max over the deepest chain covering it.
    fn pushdown(&self, eval: &Evaluator, beta: &Shift) -> Result<FineField> {
        let per = self.scale.per_axis as usize;
        let mut fine = FineField::new(per, self.d);
        let k_min = self.scale.cell_log2;
        let k_max = self.window.level;
        let mut above: HashMap<Vec<i64>, f64> = HashMap::new();
        for k in (k_min..=k_max).rev() {
            let cubes = enumerate_cubes(self.window, beta, k, k)?;
            let mut current: HashMap<Vec<i64>, f64> = HashMap::with_capacity(cubes.len());
            for cube in cubes {
                let (corner, side) = self.scale.cube_box_u(&cube, self.window)?;
                let own = eval.value(&corner, side);
                let inherited = above
                    .get(&cube.parent().index)
                    .copied()
                    .unwrap_or(0.0);
                let running = own.max(inherited);
                write_box(&mut fine.values, per, self.d, &corner, side, running);
                current.insert(cube.index, running);
            }
            above = current;
        }
        Ok(fine)
    }

    /// Exhaustive supremum over mesh-aligned cubes of every side and
    /// position.
    fn mesh_aligned(&self, eval: &Evaluator) -> Result<FineField> {
        let cells = 1usize << self.resolution;
        let per = self.scale.per_axis as usize;
        let mut fine = FineField::new(per, self.d);
        for t in 1..=cells {
            let side_u = 3 * t as i64;
            let positions = cells - t + 1;
            let mut pos = vec![0usize; self.d];
            loop {
                let corner: Vec<i64> = pos.iter().map(|&p| 3 * p as i64).collect();
                let v = eval.value(&corner, side_u);
                max_box(&mut fine.values, per, self.d, &corner, side_u, v);
                let mut axis = self.d;
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
        Ok(fine)
    }

    fn finish(
        &self,
        fine: FineField,
        cube_set: &CubeSet,
        alpha: f64,
        n: usize,
    ) -> Result<MaximalResult> {
        let field = fine.sample_to_mesh(self.window, self.resolution)?;
        Ok(MaximalResult {
            field,
            cube_set: cube_set.clone(),
            alpha,
            n,
            fine,
        })
    }
}

fn write_box(values: &mut [f64], per: usize, d: usize, corner: &[i64], side: i64, v: f64) {
    box_rows(per, d, corner, side, |base, len| {
        for slot in &mut values[base..base + len] {
            *slot = v;
        }
    });
}

fn max_box(values: &mut [f64], per: usize, d: usize, corner: &[i64], side: i64, v: f64) {
    box_rows(per, d, corner, side, |base, len| {
        for slot in &mut values[base..base + len] {
            if v > *slot {
                *slot = v;
            }
        }
    });
}

/// Visits each contiguous row (last-axis run) of a u-box.
pub(crate) fn box_rows(
    per: usize,
    d: usize,
    corner: &[i64],
    side: i64,
    mut f: impl FnMut(usize, usize),
) {
    let side = side as usize;
    if d == 1 {
        f(corner[0] as usize, side);
        return;
    }
    let outer = d - 1;
    let mut cursor = vec![0usize; outer];
    loop {
        let mut base = 0usize;
        for j in 0..outer {
            base = base * per + corner[j] as usize + cursor[j];
        }
        base = base * per + corner[outer] as usize;
        f(base, side);
        let mut axis = outer;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            cursor[axis] += 1;
            if cursor[axis] < side {
                break;
            }
            cursor[axis] = 0;
        }
    }
}

fn check_meshes(fields: &[&MeshField], window: &Window) -> Result<u32> {
    let first = fields
        .first()
        .ok_or_else(|| Error::Usage("at least one field is required".into()))?;
    if first.window != *window {
        return Err(Error::Usage(
            "fields do not live on the requested window".into(),
        ));
    }
    for f in fields {
        if f.window != first.window || f.resolution != first.resolution {
            return Err(Error::Usage("all fields must share one mesh".into()));
        }
    }
    Ok(first.resolution)
}

/// Weighted averages are ratios, so both tables hold raw u-cell value
/// sums with no volume factor: the common scale cancels symbolically, and
/// skipping it keeps cube values of cell-exact data exact (one inexact
/// `1/3^d` multiplication per addend would otherwise leak 1-ulp noise into
/// strict threshold comparisons).
fn weighted_evaluator(sigmas: &[&MeshField], fs: &[&MeshField]) -> Result<Evaluator> {
    let mut nums = Vec::with_capacity(fs.len());
    let mut dens = Vec::with_capacity(fs.len());
    for (f, sigma) in fs.iter().zip(sigmas.iter()) {
        nums.push(prefix_of_fine(&FineField::product_of(f, sigma)?, 1.0));
        dens.push(prefix_of_fine(&FineField::from_mesh(sigma)?, 1.0));
    }
    Ok(Evaluator::Weighted { nums, dens })
}

/// The weighted multilinear maximal function
/// `sup_Q ∏ᵢ (χ_Q/σᵢ(Q)) ∫_Q |fᵢ|σᵢ` over the selected cube set.
pub fn multilinear_weighted_maximal(
    sigmas: &[&MeshField],
    fs: &[&MeshField],
    cube_set: &CubeSet,
    window: &Window,
) -> Result<MaximalResult> {
    if sigmas.len() != fs.len() || fs.is_empty() {
        return Err(Error::Usage(
            "need matching, nonempty weight and function lists".into(),
        ));
    }
    let all: Vec<&MeshField> = sigmas.iter().chain(fs.iter()).cloned().collect();
    let resolution = check_meshes(&all, window)?;
    let sweep = Sweep::new(window, resolution)?;
    let eval = weighted_evaluator(sigmas, fs)?;
    let fine = sweep.run(&eval, cube_set)?;
    sweep.finish(fine, cube_set, 0.0, fs.len())
}

/// The fractional multilinear maximal function
/// `sup_Q |Q|^{α/d} ∏ᵢ |Q|^{−1} ∫_Q |fᵢ|`; the composed form over
/// `σᵢ·fᵢ` is obtained by passing the products as inputs.
pub fn fractional_multilinear_maximal(
    fs: &[&MeshField],
    alpha: f64,
    cube_set: &CubeSet,
    window: &Window,
) -> Result<MaximalResult> {
    let resolution = check_meshes(fs, window)?;
    let fine_inputs: Vec<FineField> = fs
        .iter()
        .map(|f| FineField::from_mesh_with(f, f64::abs))
        .collect::<Result<_>>()?;
    fractional_maximal_fine(
        &fine_inputs,
        alpha,
        cube_set,
        window,
        resolution,
        fs[0].cell_volume(),
    )
}

/// Fractional maximal over inputs already resolved on the u-lattice —
/// the entry point for cube-restricted inner maximals `M_α(σ⃗·χ_Q)`,
/// whose restriction cuts at u-boundaries.
pub fn fractional_maximal_fine(
    inputs: &[FineField],
    alpha: f64,
    cube_set: &CubeSet,
    window: &Window,
    resolution: u32,
    cell_volume: f64,
) -> Result<MaximalResult> {
    let n = inputs.len();
    let d = window.d();
    let u_volume = cell_volume / 3f64.powi(d as i32);
    let nums: Vec<UPrefix> = inputs
        .iter()
        .map(|fine| prefix_of_fine(fine, u_volume))
        .collect();
    let fine = fractional_fine_clipped(
        &nums,
        &vec![None; n],
        alpha,
        cube_set,
        window,
        resolution,
        cell_volume,
    )?;
    let sweep = Sweep::new(window, resolution)?;
    sweep.finish(fine, cube_set, alpha, n)
}

/// Fractional maximal sweep over prebuilt numerator tables, each factor
/// optionally clipped to a fixed u-box. Callers that evaluate many
/// cube-restricted maximals `M_α(σ⃗·χ_R)` build the tables once and vary
/// only the clips.
pub(crate) fn fractional_fine_clipped(
    nums: &[UPrefix],
    clips: &[Option<(Vec<i64>, i64)>],
    alpha: f64,
    cube_set: &CubeSet,
    window: &Window,
    resolution: u32,
    cell_volume: f64,
) -> Result<FineField> {
    let n = nums.len();
    if n == 0 || clips.len() != n {
        return Err(Error::Usage(
            "need one numerator table and one clip slot per input".into(),
        ));
    }
    let d = window.d();
    if !(alpha >= 0.0 && alpha < (n * d) as f64) {
        return Err(Error::Usage(format!(
            "fractional order must satisfy 0 ≤ α < n·d = {}, got {alpha}",
            n * d
        )));
    }
    let sweep = Sweep::new(window, resolution)?;
    let eval = Evaluator::Fractional {
        nums: nums.to_vec(),
        clips: clips.to_vec(),
        alpha_over_d: alpha / d as f64,
        cell_volume,
        d,
    };
    sweep.run(&eval, cube_set)
}

/// The logarithmic maximal function `sup_Q exp(|Q|^{−1} ∫_Q ln|f|)`;
/// any cube touching a zero cell contributes 0.
pub fn log_maximal(
    f: &MeshField,
    cube_set: &CubeSet,
    window: &Window,
) -> Result<MaximalResult> {
    let resolution = check_meshes(&[f], window)?;
    let sweep = Sweep::new(window, resolution)?;
    let d = sweep.d;
    let cell_volume = f.cell_volume();
    let u_volume = cell_volume / 3f64.powi(d as i32);
    let logs_fine = FineField::from_mesh_with(f, |v| {
        let a = v.abs();
        if a == 0.0 {
            0.0
        } else {
            a.ln()
        }
    })?;
    let zeros_fine = FineField::from_mesh_with(f, |v| if v == 0.0 { 1.0 } else { 0.0 })?;
    let eval = Evaluator::Log {
        logs: prefix_of_fine(&logs_fine, u_volume),
        zeros: prefix_of_fine(&zeros_fine, 1.0),
        cell_volume,
        d,
    };
    let fine = sweep.run(&eval, cube_set)?;
    sweep.finish(fine, cube_set, 0.0, 1)
}

/// The inclusion-maximal cubes of `D^β` inside the window whose product of
/// weighted averages strictly exceeds `λ`.
pub fn level_cubes(
    sigmas: &[&MeshField],
    fs: &[&MeshField],
    lambda: f64,
    beta: &Shift,
    window: &Window,
) -> Result<Vec<DyadicCube>> {
    if !(lambda > 0.0) {
        return Err(Error::Usage(format!(
            "level threshold must be positive, got {lambda}"
        )));
    }
    if sigmas.len() != fs.len() || fs.is_empty() {
        return Err(Error::Usage(
            "need matching, nonempty weight and function lists".into(),
        ));
    }
    let all: Vec<&MeshField> = sigmas.iter().chain(fs.iter()).cloned().collect();
    let resolution = check_meshes(&all, window)?;
    let scale = UnitScale::new(window, resolution)?;
    let eval = weighted_evaluator(sigmas, fs)?;
    let k_min = scale.cell_log2;
    let k_max = window.level;
    let mut out = Vec::new();
    for root in grid_roots(window, beta, k_min, k_max)? {
        descend(&root, &eval, &scale, window, lambda, k_min, &mut out)?;
    }
    Ok(out)
}

fn descend(
    cube: &DyadicCube,
    eval: &Evaluator,
    scale: &UnitScale,
    window: &Window,
    lambda: f64,
    k_min: i32,
    out: &mut Vec<DyadicCube>,
) -> Result<()> {
    let (corner, side) = scale.cube_box_u(cube, window)?;
    if eval.value(&corner, side) > lambda {
        out.push(cube.clone());
        return Ok(());
    }
    if cube.level == k_min {
        return Ok(());
    }
    for child in cube.children() {
        descend(&child, eval, scale, window, lambda, k_min, out)?;
    }
    Ok(())
}

/// Maximum retries of [`sparse_decompose`] with a doubled ratio base.
const SPARSE_RETRIES: u32 = 6;

/// Stopping-time sparse decomposition: level cubes at the geometric
/// thresholds `a^k` spanning the attained range of the single-grid maximal
/// function, with `E_Q = Q \ A_{k+1}`. If the family fails validation the
/// base is doubled and the construction repeated.
pub fn sparse_decompose(
    sigmas: &[&MeshField],
    fs: &[&MeshField],
    base: f64,
    beta: &Shift,
    window: &Window,
) -> Result<SparseFamily> {
    if !(base > 1.0 && base.is_finite()) {
        return Err(Error::Usage(format!(
            "sparse ratio base must exceed 1, got {base}"
        )));
    }
    let all: Vec<&MeshField> = sigmas.iter().chain(fs.iter()).cloned().collect();
    let resolution = check_meshes(&all, window)?;

    let maximal = multilinear_weighted_maximal(
        sigmas,
        fs,
        &CubeSet::SingleGrid(beta.clone()),
        window,
    )?;
    let mut v_min = f64::INFINITY;
    let mut v_max: f64 = 0.0;
    for &v in maximal.fine().values() {
        if v > 0.0 {
            v_min = v_min.min(v);
            v_max = v_max.max(v);
        }
    }

    let mut a = base;
    let mut last_packing = 0.0f64;
    for _ in 0..=SPARSE_RETRIES {
        let family = build_family(sigmas, fs, a, beta, window, resolution, v_min, v_max)?;
        let report = crate::dyadic::validate_sparse(&family)?;
        last_packing = report.measured_packing;
        if report.pass {
            return Ok(family);
        }
        a *= 2.0;
    }
    Err(Error::Decomposition {
        packing: last_packing,
        retries: SPARSE_RETRIES,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_family(
    sigmas: &[&MeshField],
    fs: &[&MeshField],
    a: f64,
    beta: &Shift,
    window: &Window,
    resolution: u32,
    v_min: f64,
    v_max: f64,
) -> Result<SparseFamily> {
    let scale = UnitScale::new(window, resolution)?;
    let d = window.d();
    let mut entries: Vec<SparseEntry> = Vec::new();

    if v_min.is_finite() && v_max > 0.0 {
        // Generations k with a^k in [v_min, v_max): thresholds below the
        // attained maximum that at least one point exceeds.
        let k_lo = (v_min.ln() / a.ln()).ceil() as i64;
        let k_hi_raw = (v_max.ln() / a.ln()).floor() as i64;
        // Trim: a^k must be strictly below v_max.
        let mut ks: Vec<i64> = (k_lo..=k_hi_raw).collect();
        while let Some(&k) = ks.last() {
            if a.powi(k as i32) < v_max {
                break;
            }
            ks.pop();
        }
        // Per generation: the level cubes and their union mask.
        let mut per_generation: Vec<(i64, Vec<(DyadicCube, Vec<i64>, i64)>, CellMask)> =
            Vec::new();
        for &k in &ks {
            let lambda = a.powi(k as i32);
            let cubes = level_cubes(sigmas, fs, lambda, beta, window)?;
            let mut union = CellMask::for_scale(&scale, d)?;
            let mut boxed = Vec::with_capacity(cubes.len());
            for cube in cubes {
                let (corner, side) = scale.cube_box_u(&cube, window)?;
                union.set_box(&corner, side);
                boxed.push((cube, corner, side));
            }
            per_generation.push((k, boxed, union));
        }
        for gi in 0..per_generation.len() {
            let next_union = if gi + 1 < per_generation.len() {
                Some(per_generation[gi + 1].2.clone())
            } else {
                None
            };
            let (k, boxed, _) = &per_generation[gi];
            for (cube, corner, side) in boxed {
                let mut e_mask = CellMask::for_scale(&scale, d)?;
                e_mask.set_box(corner, *side);
                if let Some(nu) = &next_union {
                    e_mask.subtract(nu);
                }
                entries.push(SparseEntry {
                    cube: cube.clone(),
                    generation: *k as i32,
                    e_mask,
                });
            }
        }
    }

    let mut family = SparseFamily {
        beta: beta.clone(),
        entries,
        packing: 0.0,
        base: a,
        window: window.clone(),
        resolution,
    };
    family.packing = crate::dyadic::validate_sparse(&family)?.measured_packing;
    Ok(family)
}

/// One weak-type sample: the threshold and `Φ(λ)·ν(E_λ)`.
#[derive(Debug, Clone, Copy)]
pub struct WeakTypePoint {
    pub lambda: f64,
    pub product: f64,
}

/// Weak-type profile of the single-grid weighted maximal function applied
/// to norm-normalized inputs.
#[derive(Debug, Clone)]
pub struct WeakTypeProfile {
    pub points: Vec<WeakTypePoint>,
    pub supremum: f64,
}

/// Computes `Φ(λ)·ν_{σ⃗}({M^{D^β}(g⃗) > λ})` along a threshold grid, where
/// `gᵢ = fᵢ/‖fᵢ‖` in the `Φᵢ`-Luxemburg norm against `σᵢ`.
pub fn weak_type_profile(
    sigmas: &[&MeshField],
    fs: &[&MeshField],
    phis: &[GrowthFunction],
    phi: &GrowthFunction,
    lambda_grid: &[f64],
    beta: &Shift,
    window: &Window,
) -> Result<WeakTypeProfile> {
    if sigmas.len() != fs.len() || fs.len() != phis.len() || fs.is_empty() {
        return Err(Error::Usage(
            "need matching weight, function, and growth lists".into(),
        ));
    }
    if lambda_grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Usage("thresholds must be positive and finite".into()));
    }
    let all: Vec<&MeshField> = sigmas.iter().chain(fs.iter()).cloned().collect();
    check_meshes(&all, window)?;

    // Normalize each input by its Luxemburg norm, cell by cell with the
    // same division the norm bisection used.
    let mut normalized = Vec::with_capacity(fs.len());
    for ((f, sigma), phi_i) in fs.iter().zip(sigmas.iter()).zip(phis.iter()) {
        if f.values().iter().all(|&v| v == 0.0) {
            return Err(Error::Usage(
                "weak-type inputs must not vanish identically".into(),
            ));
        }
        let norm = luxemburg_norm(phi_i, f, sigma, NORM_TOL)?;
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
        normalized.push(g);
    }
    let g_refs: Vec<&MeshField> = normalized.iter().collect();
    let maximal = multilinear_weighted_maximal(
        sigmas,
        &g_refs,
        &CubeSet::SingleGrid(beta.clone()),
        window,
    )?;

    let nu = crate::weights::nu_field(sigmas, phis, phi)?;
    let nu_fine = FineField::from_mesh(&nu)?;
    let u_volume = nu.cell_volume() / 3f64.powi(window.d() as i32);

    let fine = maximal.fine().values();
    let mut points = Vec::with_capacity(lambda_grid.len());
    let mut supremum: f64 = 0.0;
    for &lambda in lambda_grid {
        let mut acc = Accumulator::new();
        for (m, w) in fine.iter().zip(nu_fine.values().iter()) {
            if *m > lambda {
                acc.add(*w);
            }
        }
        let measure = acc.total() * u_volume;
        let product = phi.eval(lambda)? * measure;
        supremum = supremum.max(product);
        points.push(WeakTypePoint { lambda, product });
    }
    Ok(WeakTypeProfile { points, supremum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_field, FieldGenerator, FieldKind};

    fn ones(window: &Window, resolution: u32) -> MeshField {
        make_field(window, resolution, FieldKind::Weight, &FieldGenerator::Constant(1.0))
            .unwrap()
    }

    fn indicator(window: &Window, resolution: u32, corner: &[f64], sides: &[f64]) -> MeshField {
        make_field(
            window,
            resolution,
            FieldKind::Function,
            &FieldGenerator::Indicator {
                corner: corner.to_vec(),
                sides: sides.to_vec(),
            },
        )
        .unwrap()
    }

    fn lognormal(window: &Window, resolution: u32, seed: u64) -> MeshField {
        make_field(
            window,
            resolution,
            FieldKind::Weight,
            &FieldGenerator::Lognormal {
                seed,
                roughness: 0.8,
            },
        )
        .unwrap()
    }

    fn std_grid(d: usize) -> CubeSet {
        CubeSet::SingleGrid(Shift::standard(d))
    }

    #[test]
    fn constant_input_gives_constant_maximal() {
        let w = Window::unit(1);
        let sigma = lognormal(&w, 4, 3);
        let f = make_field(&w, 4, FieldKind::Function, &FieldGenerator::Constant(2.5))
            .unwrap();
        let m = multilinear_weighted_maximal(&[&sigma], &[&f], &std_grid(1), &w).unwrap();
        for &v in m.field.values() {
            assert!((v - 2.5).abs() <= 1e-12, "{v}");
        }
    }

    #[test]
    fn bilinear_half_indicators_match_the_enumeration_oracle() {
        let w = Window::unit(1);
        let s = ones(&w, 4);
        let f = indicator(&w, 4, &[0.0], &[0.5]);
        let m =
            multilinear_weighted_maximal(&[&s, &s], &[&f, &f], &std_grid(1), &w).unwrap();
        let vals = m.field.values();
        for (i, &v) in vals.iter().enumerate() {
            let expected = if i < 8 { 1.0 } else { 0.25 };
            assert!((v - expected).abs() <= 1e-12, "cell {i}: {v}");
        }
        // Left half is exactly 1: numerator and denominator tables are
        // built from bitwise-identical masses there.
        assert_eq!(vals[0], 1.0);
    }

    #[test]
    fn quarter_indicator_bands() {
        let w = Window::unit(1);
        let s = ones(&w, 4);
        let f = indicator(&w, 4, &[0.0], &[0.25]);
        let m = multilinear_weighted_maximal(&[&s], &[&f], &std_grid(1), &w).unwrap();
        for (i, &v) in m.field.values().iter().enumerate() {
            let expected = match i {
                0..=3 => 1.0,
                4..=7 => 0.5,
                _ => 0.25,
            };
            assert!((v - expected).abs() <= 1e-12, "cell {i}: {v}");
        }
    }

    #[test]
    fn fractional_square_root_gain_on_the_unit_window() {
        let w = Window::unit(1);
        let f = indicator(&w, 5, &[0.0], &[1.0]);
        let m = fractional_multilinear_maximal(&[&f], 0.5, &std_grid(1), &w).unwrap();
        for &v in m.field.values() {
            assert!((v - 1.0).abs() <= 1e-12, "{v}");
        }
    }

    #[test]
    fn fractional_at_zero_matches_weighted_with_unit_weights() {
        let w = Window::unit(1);
        let s = ones(&w, 5);
        let f = make_field(
            &w,
            5,
            FieldKind::Function,
            &FieldGenerator::PowerSingularity {
                center: vec![0.3],
                gamma: -0.4,
            },
        )
        .unwrap();
        for cube_set in [std_grid(1), CubeSet::AllGrids] {
            let frac = fractional_multilinear_maximal(&[&f], 0.0, &cube_set, &w).unwrap();
            let wtd = multilinear_weighted_maximal(&[&s], &[&f], &cube_set, &w).unwrap();
            for (a, b) in frac.field.values().iter().zip(wtd.field.values().iter()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn clipped_fractional_matches_masked_input() {
        let w = Window::unit(1);
        let sigma = lognormal(&w, 4, 11);
        let scale = UnitScale::new(&w, 4).unwrap();
        // Left half of the window, in u-cells (a mesh-cell boundary).
        let half = scale.per_axis / 2;
        let u_volume = sigma.cell_volume() / 3.0;
        let nums = vec![prefix_of_fine(&FineField::from_mesh(&sigma).unwrap(), u_volume)];
        let clipped = fractional_fine_clipped(
            &nums,
            &[Some((vec![0i64], half))],
            0.0,
            &CubeSet::AllGrids,
            &w,
            4,
            sigma.cell_volume(),
        )
        .unwrap();
        let mut mask = CellMask::for_scale(&scale, 1).unwrap();
        mask.set_box(&[0], half);
        let masked = FineField::from_mesh_masked(&sigma, &mask).unwrap();
        let direct = fractional_maximal_fine(
            &[masked],
            0.0,
            &CubeSet::AllGrids,
            &w,
            4,
            sigma.cell_volume(),
        )
        .unwrap();
        for (a, b) in clipped.values().iter().zip(direct.fine().values().iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn alpha_range_is_enforced() {
        let w = Window::unit(1);
        let f = ones(&w, 3);
        assert!(matches!(
            fractional_multilinear_maximal(&[&f], 1.0, &std_grid(1), &w),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            fractional_multilinear_maximal(&[&f], -0.1, &std_grid(1), &w),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn log_maximal_of_the_window_indicator_is_exactly_one() {
        let w = Window::unit(1);
        let f = indicator(&w, 6, &[0.0], &[1.0]);
        for cube_set in [std_grid(1), CubeSet::AllGrids, CubeSet::AllMeshAligned] {
            let m = log_maximal(&f, &cube_set, &w).unwrap();
            for &v in m.field.values() {
                assert_eq!(v, 1.0);
            }
        }
    }

    #[test]
    fn log_maximal_annihilates_cubes_touching_zeros() {
        let w = Window::unit(1);
        let f = indicator(&w, 4, &[0.0], &[0.5]);
        let m = log_maximal(&f, &std_grid(1), &w).unwrap();
        let vals = m.field.values();
        for (i, &v) in vals.iter().enumerate() {
            let expected = if i < 8 { 1.0 } else { 0.0 };
            assert_eq!(v, expected, "cell {i}");
        }
    }

    #[test]
    fn log_maximal_of_positive_constant() {
        let w = Window::unit(2);
        let f = make_field(&w, 3, FieldKind::Function, &FieldGenerator::Constant(3.0))
            .unwrap();
        let m = log_maximal(&f, &CubeSet::AllGrids, &w).unwrap();
        for &v in m.field.values() {
            assert!((v - 3.0).abs() <= 1e-12, "{v}");
        }
    }

    #[test]
    fn cube_set_monotonicity_pointwise() {
        // Set inclusions give pointwise domination: each single grid sits
        // inside the all-grids union, and the standard grid's cubes are
        // cell boxes, hence inside the mesh-aligned family. (All-grids and
        // mesh-aligned are incomparable as cube families: shifted cubes
        // are not cell-aligned, and their averages can exceed every cell
        // box's at a point.)
        let w = Window::unit(1);
        let sigma = lognormal(&w, 5, 17);
        let f = make_field(
            &w,
            5,
            FieldKind::Function,
            &FieldGenerator::PowerSingularity {
                center: vec![0.6],
                gamma: -0.3,
            },
        )
        .unwrap();
        let all = multilinear_weighted_maximal(&[&sigma], &[&f], &CubeSet::AllGrids, &w)
            .unwrap();
        let oracle = multilinear_weighted_maximal(
            &[&sigma],
            &[&f],
            &CubeSet::AllMeshAligned,
            &w,
        )
        .unwrap();
        for beta in Shift::all(1) {
            let single = multilinear_weighted_maximal(
                &[&sigma],
                &[&f],
                &CubeSet::SingleGrid(beta.clone()),
                &w,
            )
            .unwrap();
            for (i, (&s, &a)) in single
                .fine()
                .values()
                .iter()
                .zip(all.fine().values().iter())
                .enumerate()
            {
                assert!(s <= a + 1e-15 * a.abs(), "β={beta:?} u={i}: {s} > {a}");
            }
        }
        let standard = multilinear_weighted_maximal(&[&sigma], &[&f], &std_grid(1), &w)
            .unwrap();
        for (i, (&s, &o)) in standard
            .fine()
            .values()
            .iter()
            .zip(oracle.fine().values().iter())
            .enumerate()
        {
            assert!(s <= o + 1e-12 * o.abs(), "u={i}: standard {s} > mesh {o}");
        }
    }

    #[test]
    fn level_cubes_of_a_scaled_quarter_indicator() {
        let w = Window::unit(1);
        let s = ones(&w, 4);
        let mut f = indicator(&w, 4, &[0.0], &[0.25]);
        for v in f.values_mut() {
            *v *= 4.0;
        }
        let beta = Shift::standard(1);
        let at1 = level_cubes(&[&s], &[&f], 1.0, &beta, &w).unwrap();
        assert_eq!(at1.len(), 1);
        assert_eq!((at1[0].level, at1[0].index.clone()), (-1, vec![0]));
        let at2 = level_cubes(&[&s], &[&f], 2.0, &beta, &w).unwrap();
        assert_eq!(at2.len(), 1);
        assert_eq!((at2[0].level, at2[0].index.clone()), (-2, vec![0]));
        let at9 = level_cubes(&[&s], &[&f], 9.0, &beta, &w).unwrap();
        assert!(at9.is_empty());
    }

    #[test]
    fn level_cubes_union_equals_the_superlevel_set_exactly() {
        let w = Window::unit(1);
        let sigma = lognormal(&w, 5, 23);
        let f = make_field(
            &w,
            5,
            FieldKind::Function,
            &FieldGenerator::PowerSingularity {
                center: vec![0.2],
                gamma: -0.5,
            },
        )
        .unwrap();
        let beta = Shift::from_descriptor("1/3").unwrap();
        let m = multilinear_weighted_maximal(
            &[&sigma],
            &[&f],
            &CubeSet::SingleGrid(beta.clone()),
            &w,
        )
        .unwrap();
        let scale = UnitScale::new(&w, 5).unwrap();
        for lambda in [0.5, 1.0, 2.0, 5.0] {
            let cubes = level_cubes(&[&sigma], &[&f], lambda, &beta, &w).unwrap();
            let mut union = CellMask::for_scale(&scale, 1).unwrap();
            for (i, c) in cubes.iter().enumerate() {
                let (corner, side) = scale.cube_box_u(c, &w).unwrap();
                assert_eq!(
                    union.count_in_box(&corner, side),
                    0,
                    "cube {i} overlaps earlier ones"
                );
                union.set_box(&corner, side);
            }
            for (u, &v) in m.fine().values().iter().enumerate() {
                assert_eq!(
                    v > lambda,
                    union.get_flat(u),
                    "u-cell {u} at λ={lambda}: value {v}"
                );
            }
        }
    }

    #[test]
    fn sparse_decomposition_of_a_scaled_quarter_indicator() {
        let w = Window::unit(1);
        let s = ones(&w, 4);
        let mut f = indicator(&w, 4, &[0.0], &[0.25]);
        for v in f.values_mut() {
            *v *= 4.0;
        }
        let beta = Shift::standard(1);
        let family = sparse_decompose(&[&s], &[&f], 2.0, &beta, &w).unwrap();
        assert_eq!(family.entries.len(), 2);
        assert_eq!(family.packing, 0.5);
        let by_gen: Vec<(i32, i32, Vec<i64>)> = family
            .entries
            .iter()
            .map(|e| (e.generation, e.cube.level, e.cube.index.clone()))
            .collect();
        assert!(by_gen.contains(&(0, -1, vec![0])));
        assert!(by_gen.contains(&(1, -2, vec![0])));
        // E-sets: [¼,½) for the big cube, [0,¼) for the small one.
        let scale = UnitScale::new(&w, 4).unwrap();
        for e in &family.entries {
            let expected: Vec<(usize, usize)> = if e.generation == 0 {
                vec![(scale.per_axis as usize / 4, scale.per_axis as usize / 4)]
            } else {
                vec![(0, scale.per_axis as usize / 4)]
            };
            assert_eq!(e.e_mask.runs(), expected, "generation {}", e.generation);
        }
    }

    #[test]
    fn sparse_decomposition_of_constants_is_empty() {
        let w = Window::unit(1);
        let s = ones(&w, 4);
        let f = make_field(&w, 4, FieldKind::Function, &FieldGenerator::Constant(3.0))
            .unwrap();
        let family =
            sparse_decompose(&[&s], &[&f], 2.0, &Shift::standard(1), &w).unwrap();
        assert!(family.entries.is_empty());
        assert!(crate::dyadic::validate_sparse(&family).unwrap().pass);
    }

    #[test]
    fn sparse_decomposition_of_rough_data_validates() {
        let w = Window::unit(1);
        let sigma = lognormal(&w, 6, 7);
        let f = make_field(
            &w,
            6,
            FieldKind::Function,
            &FieldGenerator::Lognormal {
                seed: 70,
                roughness: 1.0,
            },
        )
        .unwrap();
        let family =
            sparse_decompose(&[&sigma], &[&f], 2.0, &Shift::standard(1), &w).unwrap();
        let report = crate::dyadic::validate_sparse(&family).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn weak_type_profile_of_the_window_indicator() {
        let w = Window::unit(1);
        let s = ones(&w, 5);
        let f = indicator(&w, 5, &[0.0], &[1.0]);
        let phi = GrowthFunction::power(1.0).unwrap();
        let grid = [0.5, 0.9, 0.99, 0.999, 1.0, 1.5];
        let profile = weak_type_profile(
            &[&s],
            &[&f],
            &[phi.clone()],
            &phi,
            &grid,
            &Shift::standard(1),
            &w,
        )
        .unwrap();
        // ν = σ ≡ 1 and the normalized maximal is ≡ 1, so the product is
        // λ below 1 and 0 at or above it.
        assert!((profile.points[0].product - 0.5).abs() <= 1e-12);
        assert!((profile.points[3].product - 0.999).abs() <= 1e-12);
        assert_eq!(profile.points[4].product, 0.0);
        assert!(profile.supremum <= 1.0 + 1e-9);
        assert!(profile.supremum >= 0.99);
    }

    #[test]
    fn weak_type_rejects_vanishing_inputs() {
        let w = Window::unit(1);
        let s = ones(&w, 4);
        let zero = make_field(&w, 4, FieldKind::Function, &FieldGenerator::Constant(0.0))
            .unwrap();
        let phi = GrowthFunction::power(1.0).unwrap();
        assert!(matches!(
            weak_type_profile(
                &[&s],
                &[&zero],
                &[phi.clone()],
                &phi,
                &[1.0],
                &Shift::standard(1),
                &w,
            ),
            Err(Error::Usage(_))
        ));
    }
}
