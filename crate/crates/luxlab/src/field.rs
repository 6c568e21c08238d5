//! Discretized weights and functions on the mesh of a dyadic window.
//!
//! A mesh field stores one value per cell of the `2^L × … × 2^L` grid
//! spanning the window; weights are kept strictly positive by a floor.
//! Integrals over grid cubes — including `1/3`-shifted cubes, whose corners
//! fall on thirds of a cell — are computed with per-cell overlap weights
//! `o_c/3^d` where `o_c` is an integer u-cell overlap count. Interior cells
//! get weight exactly `1.0`, so integrals of cubes aligned with the mesh
//! (every standard-grid cube) reduce to plain compensated sums times a
//! power-of-two cell volume: constant-field averages come out bit-exact.

use crate::dyadic::{CellMask, DyadicCube, UnitScale, Window};
use crate::numerics::Accumulator;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Positivity floor applied to every weight cell.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Whether a field is a weight (strictly positive) or a function (any
/// finite real; operators apply `|·|` where needed).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Weight,
    Function,
}

impl FieldKind {
    fn name(self) -> &'static str {
        match self {
            Self::Weight => "weight",
            Self::Function => "function",
        }
    }
}

/// Cell-value recipes for [`make_field`].
#[derive(Debug, Clone)]
pub enum FieldGenerator {
    Constant(f64),
    /// 1 on cells whose center lies in the box, else 0.
    Indicator { corner: Vec<f64>, sides: Vec<f64> },
    /// `max(dist(cell center, center), half cell side)^gamma`; requires
    /// `gamma > −d` so the singularity stays integrable after clipping.
    PowerSingularity { center: Vec<f64>, gamma: f64 },
    /// `exp(roughness · G)` for a seeded, smoothed unit-variance noise `G`.
    Lognormal { seed: u64, roughness: f64 },
    FromValues(Vec<f64>),
}

/// A field resolved on the mesh: `(2^resolution)^d` cells, row-major with
/// axis 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshField {
    pub window: Window,
    pub resolution: u32,
    pub kind: FieldKind,
    values: Vec<f64>,
}

impl MeshField {
    pub fn d(&self) -> usize {
        self.window.d()
    }

    pub fn cells_per_axis(&self) -> usize {
        1usize << self.resolution
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    /// Side of one mesh cell: `2^{window level − resolution}`.
    pub fn cell_side(&self) -> f64 {
        ((self.window.level - self.resolution as i32) as f64).exp2()
    }

    /// Volume of one mesh cell, an exact power of two.
    pub fn cell_volume(&self) -> f64 {
        (((self.window.level - self.resolution as i32) as i64 * self.d() as i64) as f64).exp2()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scale(&self) -> Result<UnitScale> {
        UnitScale::new(&self.window, self.resolution)
    }

    /// Multi-index of a flat cell index, axis 0 most significant.
    pub fn cell_coords(&self, flat: usize) -> Vec<usize> {
        let per = self.cells_per_axis();
        let mut rest = flat;
        let mut coords = vec![0usize; self.d()];
        for j in (0..self.d()).rev() {
            coords[j] = rest % per;
            rest /= per;
        }
        coords
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        let per = self.cells_per_axis();
        coords.iter().fold(0usize, |acc, &c| acc * per + c)
    }

    /// Center of a cell in ambient coordinates.
    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        let side = self.cell_side();
        let corner = self.window.corner();
        self.cell_coords(flat)
            .iter()
            .zip(corner.iter())
            .map(|(&i, &w)| w + (i as f64 + 0.5) * side)
            .collect()
    }

    /// Integral of the stored values over a grid cube:
    /// `Σ_c value_c · (o_c/3^d) · cell volume` with integer overlap counts
    /// `o_c`. Compensated; exact power-of-two scaling.
    pub fn integrate(&self, cube: &DyadicCube) -> Result<f64> {
        Ok(self.weighted_cell_sum(cube, |_| 1.0)? * self.cell_volume())
    }

    /// Integral of `g(cell)·value_c` over the cube, without the cell-volume
    /// scale — the shared building block for integrals and averages.
    fn weighted_cell_sum(
        &self,
        cube: &DyadicCube,
        g: impl Fn(usize) -> f64,
    ) -> Result<f64> {
        let scale = self.scale()?;
        let (corner_u, side_u) = scale.cube_box_u(cube, &self.window)?;
        let d = self.d();
        let three_d = 3i64.pow(d as u32) as f64;
        // Cell ranges touched per axis.
        let lo: Vec<i64> = corner_u.iter().map(|&a| a.div_euclid(3)).collect();
        let hi: Vec<i64> = corner_u
            .iter()
            .map(|&a| (a + side_u + 2).div_euclid(3)) // ceil((a+side)/3) exclusive
            .collect();
        let per = self.cells_per_axis() as i64;
        let mut acc = Accumulator::new();
        let mut coords = lo.clone();
        loop {
            // Integer overlap per axis: cell j spans [3c, 3c+3).
            let mut o: i64 = 1;
            for j in 0..d {
                let c0 = 3 * coords[j];
                let a = corner_u[j].max(c0);
                let b = (corner_u[j] + side_u).min(c0 + 3);
                o *= (b - a).max(0);
            }
            if o > 0 {
                let flat = coords
                    .iter()
                    .fold(0usize, |accu, &c| accu * per as usize + c as usize);
                let w = if o == three_d as i64 {
                    1.0
                } else {
                    o as f64 / three_d
                };
                acc.add(g(flat) * (self.values[flat] * w));
            }
            // Odometer.
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
        Ok(acc.total())
    }

    /// Integral over an arbitrary u-cell mask: set u-cells are counted per
    /// mesh cell, each contributing `value_c·(count/3^d)·cell volume`.
    pub fn mask_integrate(&self, mask: &CellMask) -> Result<f64> {
        let scale = self.scale()?;
        if mask.per_axis != scale.per_axis || mask.d != self.d() {
            return Err(Error::Usage(
                "mask resolution does not match the field mesh".into(),
            ));
        }
        let d = self.d();
        let three_d = 3i64.pow(d as u32) as f64;
        let per = self.cells_per_axis();
        let mut acc = Accumulator::new();
        let mut coords = vec![0usize; d];
        for flat in 0..self.cell_count() {
            let u_corner: Vec<i64> = coords.iter().map(|&c| 3 * c as i64).collect();
            let cnt = mask.count_in_box(&u_corner, 3);
            if cnt > 0 {
                let w = if cnt == three_d as u64 {
                    1.0
                } else {
                    cnt as f64 / three_d
                };
                acc.add(self.values[flat] * w);
            }
            let mut axis = d;
            while axis > 0 {
                axis -= 1;
                coords[axis] += 1;
                if coords[axis] < per {
                    break;
                }
                coords[axis] = 0;
            }
        }
        Ok(acc.total() * self.cell_volume())
    }

    /// Integral over the whole window.
    pub fn total(&self) -> f64 {
        let mut acc = Accumulator::new();
        for &v in &self.values {
            acc.add(v);
        }
        acc.total() * self.cell_volume()
    }

    /// Serializes to the interchange CSV: a header line
    /// `# window=<level>:<idx,…>;L=<res>;kind=<weight|function>;d=<d>`
    /// followed by one value per line in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# window={}:{};L={};kind={};d={}\n",
            self.window.level,
            self.window
                .index
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.resolution,
            self.kind.name(),
            self.d()
        );
        for v in &self.values {
            out.push_str(&format!("{v}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field file".into()))?
            .trim();
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("field file must start with a # header".into()))?
            .trim();
        let mut window = None;
        let mut resolution = None;
        let mut kind = None;
        let mut d_declared = None;
        for part in header.split(';') {
            let part = part.trim();
            if let Some(v) = part.strip_prefix("window=") {
                let (lvl, idx) = v
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("bad window field `{v}`")))?;
                let level: i32 = lvl
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad window level `{lvl}`")))?;
                let index = idx
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<i64>()
                            .map_err(|_| Error::Parse(format!("bad window index `{c}`")))
                    })
                    .collect::<Result<Vec<i64>>>()?;
                window = Some(Window::new(level, index));
            } else if let Some(v) = part.strip_prefix("L=") {
                resolution = Some(
                    v.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Parse(format!("bad resolution `{v}`")))?,
                );
            } else if let Some(v) = part.strip_prefix("kind=") {
                kind = Some(match v.trim() {
                    "weight" => FieldKind::Weight,
                    "function" => FieldKind::Function,
                    other => {
                        return Err(Error::Parse(format!(
                            "field kind must be weight or function, got `{other}`"
                        )))
                    }
                });
            } else if let Some(v) = part.strip_prefix("d=") {
                d_declared = Some(
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad dimension `{v}`")))?,
                );
            }
        }
        let window = window.ok_or_else(|| Error::Parse("field header missing window=".into()))?;
        let resolution =
            resolution.ok_or_else(|| Error::Parse("field header missing L=".into()))?;
        let kind = kind.ok_or_else(|| Error::Parse("field header missing kind=".into()))?;
        if let Some(d) = d_declared {
            if d != window.d() {
                return Err(Error::Parse(format!(
                    "declared dimension {d} contradicts the {}-axis window",
                    window.d()
                )));
            }
        }
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::Parse(format!("field line {}: bad value `{line}`", lineno + 2))
            })?;
            values.push(v);
        }
        make_field(&window, resolution, kind, &FieldGenerator::FromValues(values))
    }
}

/// Builds a field from a generator recipe, applying the weight floor where
/// the kind demands it.
pub fn make_field(
    window: &Window,
    resolution: u32,
    kind: FieldKind,
    generator: &FieldGenerator,
) -> Result<MeshField> {
    let d = window.d();
    if d == 0 {
        return Err(Error::Usage("fields need at least one axis".into()));
    }
    if resolution > 20 || (resolution as u64 * d as u64) > 26 {
        return Err(Error::Usage(format!(
            "mesh of 2^{resolution} cells per axis in {d} axes is too large"
        )));
    }
    let per = 1usize << resolution;
    let count = per.pow(d as u32);
    let mut field = MeshField {
        window: window.clone(),
        resolution,
        kind,
        values: vec![0.0; count],
    };
    match generator {
        FieldGenerator::Constant(c) => {
            if !c.is_finite() {
                return Err(Error::Usage(format!("constant value {c} is not finite")));
            }
            field.values.fill(*c);
        }
        FieldGenerator::Indicator { corner, sides } => {
            if corner.len() != d || sides.len() != d {
                return Err(Error::Usage(
                    "indicator box dimension does not match the window".into(),
                ));
            }
            if corner.iter().chain(sides.iter()).any(|v| !v.is_finite())
                || sides.iter().any(|&s| s <= 0.0)
            {
                return Err(Error::Usage("indicator box must be finite with positive sides".into()));
            }
            for flat in 0..count {
                let center = field.cell_center(flat);
                let inside = (0..d).all(|j| {
                    center[j] >= corner[j] && center[j] < corner[j] + sides[j]
                });
                field.values[flat] = if inside { 1.0 } else { 0.0 };
            }
        }
        FieldGenerator::PowerSingularity { center, gamma } => {
            if center.len() != d {
                return Err(Error::Usage(
                    "singularity center dimension does not match the window".into(),
                ));
            }
            if center.iter().any(|v| !v.is_finite()) || !gamma.is_finite() {
                return Err(Error::Usage("singularity parameters must be finite".into()));
            }
            if *gamma <= -(d as f64) {
                return Err(Error::Domain(format!(
                    "singularity exponent {gamma} must exceed −d = −{d} for \
                     integrability"
                )));
            }
            let half_cell = 0.5 * field.cell_side();
            for flat in 0..count {
                let c = field.cell_center(flat);
                let dist2: f64 = c
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let dist = dist2.sqrt().max(half_cell);
                field.values[flat] = dist.powf(*gamma);
            }
        }
        FieldGenerator::Lognormal { seed, roughness } => {
            if !(roughness.is_finite() && *roughness >= 0.0) {
                return Err(Error::Usage(format!(
                    "lognormal roughness must be finite and nonnegative, got {roughness}"
                )));
            }
            let mut noise = white_noise(*seed, count);
            // Three box-blur passes per axis tame the white noise into a
            // correlated field with moderate dynamic range.
            for _ in 0..3 {
                for axis in 0..d {
                    box_blur_axis(&mut noise, per, d, axis);
                }
            }
            for (v, g) in field.values.iter_mut().zip(noise.iter()) {
                *v = (roughness * g).exp();
            }
        }
        FieldGenerator::FromValues(values) => {
            if values.len() != count {
                return Err(Error::Usage(format!(
                    "value list has {} entries but the mesh has {count} cells",
                    values.len()
                )));
            }
            if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Usage(format!(
                    "field values must be finite, found {bad}"
                )));
            }
            field.values.copy_from_slice(values);
        }
    }
    if kind == FieldKind::Weight {
        for v in &mut field.values {
            if !(*v >= WEIGHT_FLOOR) {
                *v = WEIGHT_FLOOR;
            }
        }
    }
    Ok(field)
}

/// Weighted average `m_σ(f, Q) = ∫_Q |f|σ / ∫_Q σ`, sharing one overlap
/// sweep so the power-of-two volume scale cancels exactly.
pub fn average(f: &MeshField, sigma: &MeshField, cube: &DyadicCube) -> Result<f64> {
    if f.window != sigma.window || f.resolution != sigma.resolution {
        return Err(Error::Usage(
            "average needs the function and weight on the same mesh".into(),
        ));
    }
    let fv = f.values();
    let num = sigma.weighted_cell_sum(cube, |flat| fv[flat].abs())?;
    let den = sigma.weighted_cell_sum(cube, |_| 1.0)?;
    if den <= 0.0 {
        return Err(Error::Degenerate(format!(
            "weight vanishes on cube {}",
            cube.descriptor()
        )));
    }
    Ok(num / den)
}

fn white_noise(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        // Box–Muller from uniforms in (0, 1].
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out.push(r * theta.cos());
        if out.len() < count {
            out.push(r * theta.sin());
        }
    }
    out
}

/// One box-blur pass (kernel width 3, edge-clamped) along `axis` of a
/// row-major `per^d` array.
fn box_blur_axis(values: &mut [f64], per: usize, d: usize, axis: usize) {
    let stride = per.pow((d - 1 - axis) as u32);
    let mut line = vec![0.0f64; per];
    // Iterate all 1-D lines along `axis`.
    let outer = values.len() / per;
    for line_idx in 0..outer {
        // Decompose line_idx into (block, offset) around the axis stride.
        let block = line_idx / stride;
        let offset = line_idx % stride;
        let base = block * stride * per + offset;
        for (i, slot) in line.iter_mut().enumerate() {
            *slot = values[base + i * stride];
        }
        for i in 0..per {
            let a = line[i.saturating_sub(1)];
            let b = line[i];
            let c = line[(i + 1).min(per - 1)];
            values[base + i * stride] = (a + b + c) / 3.0;
        }
    }
}

/// Prefix-sum table over the u-cell lattice for O(2^d) box sums. Values are
/// *u-cell masses*: the caller chooses the per-u-cell quantity (typically
/// `value_c·cell volume/3^d`). Used inside maximal-function sweeps where
/// deterministic float noise is acceptable.
#[derive(Debug, Clone)]
pub struct UPrefix {
    per: usize,
    d: usize,
    table: Vec<f64>,
}

impl UPrefix {
    /// Builds the table from a u-cell mass function.
    pub fn build(per: usize, d: usize, mass: impl Fn(&[i64]) -> f64) -> Self {
        let pp = per + 1;
        let total = pp.pow(d as u32);
        let mut table = vec![0.0f64; total];
        // Fill raw masses at offset-by-one positions, then prefix along
        // each axis in turn.
        let mut coords = vec![0usize; d];
        for flat in 0..per.pow(d as u32) {
            let mut rest = flat;
            for j in (0..d).rev() {
                coords[j] = rest % per;
                rest /= per;
            }
            let idx = coords.iter().fold(0usize, |acc, &c| acc * pp + c + 1);
            let ic: Vec<i64> = coords.iter().map(|&c| c as i64).collect();
            table[idx] = mass(&ic);
        }
        for axis in 0..d {
            let stride = pp.pow((d - 1 - axis) as u32);
            let outer = total / pp;
            for line_idx in 0..outer {
                let block = line_idx / stride;
                let offset = line_idx % stride;
                let base = block * stride * pp + offset;
                for i in 1..pp {
                    table[base + i * stride] += table[base + (i - 1) * stride];
                }
            }
        }
        Self { per, d, table }
    }

    pub fn per_axis(&self) -> usize {
        self.per
    }

    /// Sum of masses over the u-box `[corner, corner+side)` per axis, by
    /// 2^d-corner inclusion–exclusion.
    pub fn box_sum(&self, corner: &[i64], side: i64) -> f64 {
        debug_assert_eq!(corner.len(), self.d);
        let pp = self.per + 1;
        let mut total = 0.0f64;
        for mask in 0..1usize << self.d {
            let mut idx = 0usize;
            let mut sign = 1.0f64;
            for (j, &c) in corner.iter().enumerate() {
                let hi = (mask >> j) & 1 == 1;
                let coord = if hi {
                    (c + side) as usize
                } else {
                    sign = -sign;
                    c as usize
                };
                idx = idx * pp + coord;
            }
            total += sign * self.table[idx];
        }
        total
    }

    /// Sum of masses over the general rectangle `∏ⱼ [loⱼ, hiⱼ)`; zero when
    /// any axis is empty. Covers cube–cube intersections, which need not be
    /// cubes themselves.
    pub fn rect_sum(&self, lo: &[i64], hi: &[i64]) -> f64 {
        debug_assert_eq!(lo.len(), self.d);
        debug_assert_eq!(hi.len(), self.d);
        if lo.iter().zip(hi.iter()).any(|(a, b)| b <= a) {
            return 0.0;
        }
        let pp = self.per + 1;
        let mut total = 0.0f64;
        for mask in 0..1usize << self.d {
            let mut idx = 0usize;
            let mut sign = 1.0f64;
            for j in 0..self.d {
                let coord = if (mask >> j) & 1 == 1 {
                    hi[j] as usize
                } else {
                    sign = -sign;
                    lo[j] as usize
                };
                idx = idx * pp + coord;
            }
            total += sign * self.table[idx];
        }
        total
    }
}

/// Parses a generator descriptor: `constant:c=2`,
/// `indicator:lo=<a,…>,side=<s,…>`, `singularity:center=<c,…>,gamma=<g>`,
/// `lognormal:rough=<r>` (seeded by the caller), or `csv:<path>` which
/// loads a serialized field directly (window, resolution, and kind must
/// then match the request).
pub fn field_from_descriptor(
    text: &str,
    window: &Window,
    resolution: u32,
    kind: FieldKind,
    seed: u64,
) -> Result<MeshField> {
    let text = text.trim();
    if let Some(path) = text.strip_prefix("csv:") {
        let content = std::fs::read_to_string(path.trim())?;
        let field = MeshField::from_csv(&content)?;
        if field.window != *window || field.resolution != resolution {
            return Err(Error::Usage(format!(
                "field file {path} has window/resolution different from the request"
            )));
        }
        if field.kind != kind {
            return Err(Error::Usage(format!(
                "field file {path} is a {} but a {} was requested",
                field.kind.name(),
                kind.name()
            )));
        }
        return Ok(field);
    }
    let generator = generator_from_descriptor(text, seed)?;
    make_field(window, resolution, kind, &generator)
}

/// Parses the non-file generator forms.
pub fn generator_from_descriptor(text: &str, seed: u64) -> Result<FieldGenerator> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix("constant:") {
        let c = scalar_param(rest, "c")?;
        return Ok(FieldGenerator::Constant(c));
    }
    if let Some(rest) = text.strip_prefix("indicator:") {
        let corner = vector_param(rest, "lo")?;
        let sides = vector_param(rest, "side")?;
        return Ok(FieldGenerator::Indicator { corner, sides });
    }
    if let Some(rest) = text.strip_prefix("singularity:") {
        let center = vector_param(rest, "center")?;
        let gamma = scalar_param(rest, "gamma")?;
        return Ok(FieldGenerator::PowerSingularity { center, gamma });
    }
    if let Some(rest) = text.strip_prefix("lognormal:") {
        let roughness = scalar_param(rest, "rough")?;
        return Ok(FieldGenerator::Lognormal { seed, roughness });
    }
    Err(Error::Parse(format!(
        "unrecognized field descriptor `{text}`; expected constant:…, \
         indicator:…, singularity:…, lognormal:…, or csv:<path>"
    )))
}

/// Finds `key=<scalar>` among comma-separated parameters whose values may
/// themselves be comma-separated vectors; scalar keys take the next token.
fn scalar_param(args: &str, key: &str) -> Result<f64> {
    let toks = split_params(args);
    for (k, v) in &toks {
        if k == key {
            if v.len() != 1 {
                return Err(Error::Parse(format!(
                    "parameter `{key}` expects one value, got {}",
                    v.len()
                )));
            }
            return v[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad numeric value for `{key}`: {}", v[0])));
        }
    }
    Err(Error::Parse(format!("missing parameter `{key}` in `{args}`")))
}

fn vector_param(args: &str, key: &str) -> Result<Vec<f64>> {
    let toks = split_params(args);
    for (k, v) in &toks {
        if k == key {
            return v
                .iter()
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Parse(format!("bad numeric value for `{key}`: {s}")))
                })
                .collect();
        }
    }
    Err(Error::Parse(format!("missing parameter `{key}` in `{args}`")))
}

/// Splits `lo=0,0,side=0.5,0.5,gamma=-1` into keyed token groups: a token
/// containing `=` starts a new key; bare tokens extend the current one.
fn split_params(args: &str) -> Vec<(String, Vec<String>)> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for tok in args.split(',') {
        let tok = tok.trim();
        if let Some((k, v)) = tok.split_once('=') {
            out.push((k.trim().to_string(), vec![v.trim().to_string()]));
        } else if let Some(last) = out.last_mut() {
            last.1.push(tok.to_string());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::Shift;

    fn unit_window() -> Window {
        Window::unit(1)
    }

    #[test]
    fn constant_field_and_integral() {
        let f = make_field(
            &unit_window(),
            3,
            FieldKind::Weight,
            &FieldGenerator::Constant(2.0),
        )
        .unwrap();
        assert_eq!(f.cell_count(), 8);
        assert!(f.values().iter().all(|&v| v == 2.0));
        let half = DyadicCube::new(Shift::standard(1), -1, vec![0]).unwrap();
        assert_eq!(f.integrate(&half).unwrap(), 1.0);
        assert_eq!(f.total(), 2.0);
    }

    #[test]
    fn indicator_marks_cells_by_center() {
        let f = make_field(
            &unit_window(),
            2,
            FieldKind::Function,
            &FieldGenerator::Indicator {
                corner: vec![0.0],
                sides: vec![0.25],
            },
        )
        .unwrap();
        assert_eq!(f.values(), &[1.0, 0.0, 0.0, 0.0]);
        // As a weight the zeros are floored.
        let w = make_field(
            &unit_window(),
            2,
            FieldKind::Weight,
            &FieldGenerator::Indicator {
                corner: vec![0.0],
                sides: vec![0.25],
            },
        )
        .unwrap();
        assert_eq!(w.values()[1], WEIGHT_FLOOR);
    }

    #[test]
    fn singularity_decays_and_respects_the_domain_bound() {
        let f = make_field(
            &unit_window(),
            10,
            FieldKind::Weight,
            &FieldGenerator::PowerSingularity {
                center: vec![0.0],
                gamma: -0.5,
            },
        )
        .unwrap();
        let v = f.values();
        assert!(v.iter().all(|x| x.is_finite() && *x > 0.0));
        for i in 1..v.len() {
            assert!(v[i] <= v[i - 1], "cell {i} fails monotone decay");
        }
        assert!(matches!(
            make_field(
                &unit_window(),
                4,
                FieldKind::Weight,
                &FieldGenerator::PowerSingularity {
                    center: vec![0.5],
                    gamma: -1.0,
                },
            ),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lognormal_is_deterministic_and_moderate() {
        let g = FieldGenerator::Lognormal {
            seed: 42,
            roughness: 0.8,
        };
        let a = make_field(&Window::unit(2), 4, FieldKind::Weight, &g).unwrap();
        let b = make_field(&Window::unit(2), 4, FieldKind::Weight, &g).unwrap();
        assert_eq!(a.values(), b.values());
        let c = make_field(
            &Window::unit(2),
            4,
            FieldKind::Weight,
            &FieldGenerator::Lognormal {
                seed: 43,
                roughness: 0.8,
            },
        )
        .unwrap();
        assert_ne!(a.values(), c.values());
        for &v in a.values() {
            assert!(v > 0.0 && (1e-4..1e4).contains(&v), "value {v} out of range");
        }
    }

    #[test]
    fn from_values_validates_shape_and_finiteness() {
        assert!(matches!(
            make_field(
                &unit_window(),
                2,
                FieldKind::Function,
                &FieldGenerator::FromValues(vec![1.0; 3]),
            ),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            make_field(
                &unit_window(),
                2,
                FieldKind::Function,
                &FieldGenerator::FromValues(vec![1.0, f64::NAN, 0.0, 0.0]),
            ),
            Err(Error::Usage(_))
        ));
        let w = make_field(
            &unit_window(),
            2,
            FieldKind::Weight,
            &FieldGenerator::FromValues(vec![1.0, -3.0, 0.0, 2.0]),
        )
        .unwrap();
        assert_eq!(w.values(), &[1.0, WEIGHT_FLOOR, WEIGHT_FLOOR, 2.0]);
    }

    #[test]
    fn shifted_cube_integral_matches_rational_arithmetic() {
        // f = cell index on an 8-cell mesh; ∫ over [1/3, 5/6) is 50/24 by
        // hand: partial cells 2 (one third) and 6 (two thirds).
        let values: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let f = make_field(
            &unit_window(),
            3,
            FieldKind::Function,
            &FieldGenerator::FromValues(values),
        )
        .unwrap();
        let beta = Shift::from_descriptor("1/3").unwrap();
        let q = DyadicCube::new(beta, -1, vec![1]).unwrap();
        let got = f.integrate(&q).unwrap();
        let expected = 50.0 / 24.0;
        assert!((got - expected).abs() <= 1e-15 * expected, "{got}");
    }

    #[test]
    fn constant_average_is_bit_exact_even_on_shifted_cubes() {
        let beta = Shift::from_descriptor("1/3,1/3").unwrap();
        let w2 = Window::unit(2);
        let sigma = make_field(
            &w2,
            4,
            FieldKind::Weight,
            &FieldGenerator::Lognormal {
                seed: 9,
                roughness: 1.0,
            },
        )
        .unwrap();
        for c in [1.0, 2.0] {
            let f = make_field(&w2, 4, FieldKind::Function, &FieldGenerator::Constant(c))
                .unwrap();
            let q = DyadicCube::new(beta.clone(), -2, vec![1, 2]).unwrap();
            assert_eq!(average(&f, &sigma, &q).unwrap(), c);
        }
    }

    #[test]
    fn mask_integral_agrees_with_cube_integral() {
        let f = make_field(
            &unit_window(),
            4,
            FieldKind::Weight,
            &FieldGenerator::Lognormal {
                seed: 5,
                roughness: 0.6,
            },
        )
        .unwrap();
        let scale = f.scale().unwrap();
        let beta = Shift::from_descriptor("1/3").unwrap();
        let q = DyadicCube::new(beta, -2, vec![1]).unwrap();
        let (corner, side) = scale.cube_box_u(&q, &f.window).unwrap();
        let mut mask = CellMask::for_scale(&scale, 1).unwrap();
        mask.set_box(&corner, side);
        let a = f.integrate(&q).unwrap();
        let b = f.mask_integrate(&mask).unwrap();
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let f = make_field(
            &Window::unit(2),
            3,
            FieldKind::Weight,
            &FieldGenerator::Lognormal {
                seed: 11,
                roughness: 0.9,
            },
        )
        .unwrap();
        let text = f.to_csv();
        let back = MeshField::from_csv(&text).unwrap();
        assert_eq!(f, back);
        assert!(MeshField::from_csv("no header\n1\n").is_err());
        assert!(MeshField::from_csv("# window=0:0;L=2;kind=weight;d=1\n1\nbogus\n").is_err());
    }

    #[test]
    fn prefix_box_sums_match_direct_integrals() {
        let f = make_field(
            &Window::unit(2),
            3,
            FieldKind::Weight,
            &FieldGenerator::Lognormal {
                seed: 21,
                roughness: 0.7,
            },
        )
        .unwrap();
        let scale = f.scale().unwrap();
        let per = scale.per_axis as usize;
        let uvol = f.cell_volume() / 9.0;
        let values = f.values().to_vec();
        let cells = f.cells_per_axis();
        let prefix = UPrefix::build(per, 2, |u| {
            let cell = [(u[0] / 3) as usize, (u[1] / 3) as usize];
            values[cell[0] * cells + cell[1]] * uvol
        });
        let beta = Shift::from_descriptor("1/3,0").unwrap();
        for q in crate::dyadic::enumerate_cubes(&f.window, &beta, -2, -1).unwrap() {
            let (corner, side) = scale.cube_box_u(&q, &f.window).unwrap();
            let fast = prefix.box_sum(&corner, side);
            let slow = f.integrate(&q).unwrap();
            assert!(
                (fast - slow).abs() <= 1e-12 * slow.abs().max(1e-300),
                "{} fast {fast} slow {slow}",
                q.descriptor()
            );
        }
    }

    #[test]
    fn descriptor_parsing_covers_the_grammar() {
        let w = Window::unit(2);
        let f = field_from_descriptor("constant:c=1.5", &w, 2, FieldKind::Weight, 0).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.5));
        let f = field_from_descriptor(
            "indicator:lo=0,0,side=0.5,0.5",
            &w,
            2,
            FieldKind::Function,
            0,
        )
        .unwrap();
        assert_eq!(f.values()[0], 1.0);
        assert_eq!(f.values()[3], 0.0);
        let f = field_from_descriptor(
            "singularity:center=0.5,0.5,gamma=-0.5",
            &w,
            3,
            FieldKind::Weight,
            0,
        )
        .unwrap();
        assert!(f.values().iter().all(|&v| v > 0.0));
        assert!(field_from_descriptor("bogus:x=1", &w, 2, FieldKind::Weight, 0).is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let orig =
            field_from_descriptor("lognormal:rough=0.5", &w, 2, FieldKind::Weight, 77).unwrap();
        std::fs::write(&path, orig.to_csv()).unwrap();
        let loaded = field_from_descriptor(
            &format!("csv:{}", path.display()),
            &w,
            2,
            FieldKind::Weight,
            0,
        )
        .unwrap();
        assert_eq!(orig, loaded);
        // Mismatched request is refused.
        assert!(field_from_descriptor(
            &format!("csv:{}", path.display()),
            &w,
            3,
            FieldKind::Weight,
            0,
        )
        .is_err());
    }
}
