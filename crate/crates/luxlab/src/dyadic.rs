//! Shifted dyadic grids, cube arithmetic, and sparse families.
//!
//! A grid is indexed by a shift vector `β ∈ {0, 1/3}^d`; the cube with level
//! `k` and index `m ∈ ℤ^d` realizes as `2^k([0,1)^d + m + (−1)^k·β)`. The
//! alternating sign makes each shifted family a genuine grid: children of a
//! grid cube are grid cubes, and two cubes of one grid intersect in the
//! smaller cube or not at all.
//!
//! All geometry is exact. Coordinates are kept as integers in *u-units* —
//! thirds of a mesh cell — in which both standard cells and `1/3`-shifted
//! cube corners are integral, so containment, disjointness, and measure
//! comparisons never touch floating point.

use crate::{Error, Result};

/// A grid shift: one flag per axis, `true` meaning that axis is offset by
/// `(−1)^k/3` at level `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shift {
    thirds: Vec<bool>,
}

impl Shift {
    /// The unshifted (standard) grid in dimension `d`.
    pub fn standard(d: usize) -> Self {
        Self {
            thirds: vec![false; d],
        }
    }

    pub fn new(thirds: Vec<bool>) -> Self {
        Self { thirds }
    }

    /// All `2^d` shifts in lexicographic order, axis 0 most significant;
    /// the standard grid comes first.
    pub fn all(d: usize) -> Vec<Self> {
        assert!(d <= 16, "shift enumeration capped at 16 axes");
        (0..1usize << d)
            .map(|i| Self {
                thirds: (0..d).map(|axis| (i >> (d - 1 - axis)) & 1 == 1).collect(),
            })
            .collect()
    }

    pub fn d(&self) -> usize {
        self.thirds.len()
    }

    pub fn is_shifted(&self, axis: usize) -> bool {
        self.thirds[axis]
    }

    pub fn any_shifted(&self) -> bool {
        self.thirds.iter().any(|&b| b)
    }

    /// Text form, one `0` or `1/3` per axis: `0,1/3`.
    pub fn descriptor(&self) -> String {
        self.thirds
            .iter()
            .map(|&b| if b { "1/3" } else { "0" })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let thirds = text
            .split(',')
            .map(|part| match part.trim() {
                "0" => Ok(false),
                "1/3" => Ok(true),
                other => Err(Error::Parse(format!(
                    "shift component must be 0 or 1/3, got `{other}`"
                ))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if thirds.is_empty() {
            return Err(Error::Parse("empty shift descriptor".into()));
        }
        Ok(Self { thirds })
    }
}

/// Sign `(−1)^k` of the shift at level `k`.
fn level_sign(level: i32) -> i64 {
    if level.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// A cube of a shifted dyadic grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DyadicCube {
    pub beta: Shift,
    pub level: i32,
    pub index: Vec<i64>,
}

impl DyadicCube {
    pub fn new(beta: Shift, level: i32, index: Vec<i64>) -> Result<Self> {
        if beta.d() != index.len() {
            return Err(Error::Usage(format!(
                "cube index has {} axes but the shift has {}",
                index.len(),
                beta.d()
            )));
        }
        Ok(Self { beta, level, index })
    }

    pub fn d(&self) -> usize {
        self.index.len()
    }

    /// Side length `2^level`.
    pub fn side(&self) -> f64 {
        (self.level as f64).exp2()
    }

    /// Volume `2^{level·d}`.
    pub fn volume(&self) -> f64 {
        ((self.level as i64 * self.d() as i64) as f64).exp2()
    }

    /// Realized lower corner in float coordinates.
    pub fn corner(&self) -> Vec<f64> {
        let s = level_sign(self.level) as f64;
        let scale = self.side();
        self.index
            .iter()
            .enumerate()
            .map(|(j, &m)| {
                let b = if self.beta.is_shifted(j) { 1.0 / 3.0 } else { 0.0 };
                scale * (m as f64 + s * b)
            })
            .collect()
    }

    /// The `2^d` children, one level down, in lexicographic offset order.
    pub fn children(&self) -> Vec<DyadicCube> {
        let d = self.d();
        let s = level_sign(self.level);
        let base: Vec<i64> = self
            .index
            .iter()
            .enumerate()
            .map(|(j, &m)| 2 * m + if self.beta.is_shifted(j) { s } else { 0 })
            .collect();
        (0..1usize << d)
            .map(|bits| {
                let index = base
                    .iter()
                    .enumerate()
                    .map(|(j, &b)| b + ((bits >> (d - 1 - j)) & 1) as i64)
                    .collect();
                DyadicCube {
                    beta: self.beta.clone(),
                    level: self.level - 1,
                    index,
                }
            })
            .collect()
    }

    /// The unique grid cube one level up containing this one.
    pub fn parent(&self) -> DyadicCube {
        let s_parent = level_sign(self.level + 1);
        let index = self
            .index
            .iter()
            .enumerate()
            .map(|(j, &m)| {
                let b = if self.beta.is_shifted(j) { s_parent } else { 0 };
                (m - b).div_euclid(2)
            })
            .collect();
        DyadicCube {
            beta: self.beta.clone(),
            level: self.level + 1,
            index,
        }
    }

    /// Text form `beta=<0|1/3,...>;k=<level>;m=<index,...>`.
    pub fn descriptor(&self) -> String {
        format!(
            "beta={};k={};m={}",
            self.beta.descriptor(),
            self.level,
            self.index
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let mut beta = None;
        let mut level = None;
        let mut index = None;
        for part in text.trim().split(';') {
            let part = part.trim();
            if let Some(v) = part.strip_prefix("beta=") {
                beta = Some(Shift::from_descriptor(v)?);
            } else if let Some(v) = part.strip_prefix("k=") {
                level = Some(v.trim().parse::<i32>().map_err(|_| {
                    Error::Parse(format!("bad cube level `{v}`"))
                })?);
            } else if let Some(v) = part.strip_prefix("m=") {
                index = Some(
                    v.split(',')
                        .map(|c| {
                            c.trim().parse::<i64>().map_err(|_| {
                                Error::Parse(format!("bad cube index component `{c}`"))
                            })
                        })
                        .collect::<Result<Vec<i64>>>()?,
                );
            } else {
                return Err(Error::Parse(format!(
                    "unrecognized cube descriptor part `{part}`"
                )));
            }
        }
        match (beta, level, index) {
            (Some(beta), Some(level), Some(index)) => Self::new(beta, level, index),
            _ => Err(Error::Parse(format!(
                "cube descriptor `{text}` needs beta=, k=, and m= parts"
            ))),
        }
    }
}

/// The computational window: a standard dyadic box `∏ [wⱼ·2^W, (wⱼ+1)·2^W)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Window {
    pub level: i32,
    pub index: Vec<i64>,
}

impl Window {
    /// The unit cube `[0,1)^d`.
    pub fn unit(d: usize) -> Self {
        Self {
            level: 0,
            index: vec![0; d],
        }
    }

    pub fn new(level: i32, index: Vec<i64>) -> Self {
        Self { level, index }
    }

    pub fn d(&self) -> usize {
        self.index.len()
    }

    pub fn side(&self) -> f64 {
        (self.level as f64).exp2()
    }

    pub fn volume(&self) -> f64 {
        ((self.level as i64 * self.d() as i64) as f64).exp2()
    }

    pub fn corner(&self) -> Vec<f64> {
        self.index
            .iter()
            .map(|&w| w as f64 * self.side())
            .collect()
    }

    /// Exact containment of a grid cube, via integer arithmetic in thirds
    /// of the cube's own scale.
    pub fn contains_cube(&self, cube: &DyadicCube) -> bool {
        if cube.d() != self.d() || cube.level > self.level {
            return false;
        }
        // Multiply every coordinate by 3·2^{−k}: the cube corner becomes
        // 3m + s·b and the window endpoints 3w·2^{W−k}, all integers.
        let s = level_sign(cube.level);
        let scale = 1i128 << (self.level - cube.level) as u32;
        for j in 0..self.d() {
            let b = if cube.beta.is_shifted(j) { s as i128 } else { 0 };
            let lo = 3 * cube.index[j] as i128 + b;
            let hi = lo + 3;
            let w_lo = 3 * self.index[j] as i128 * scale;
            let w_hi = 3 * (self.index[j] as i128 + 1) * scale;
            if lo < w_lo || hi > w_hi {
                return false;
            }
        }
        true
    }

    /// The window as a cube of the standard grid.
    pub fn as_cube(&self) -> DyadicCube {
        DyadicCube {
            beta: Shift::standard(self.d()),
            level: self.level,
            index: self.index.clone(),
        }
    }
}

/// Conversion between cube geometry and integer *u-units*: thirds of a mesh
/// cell, for a mesh of `2^resolution` cells per axis spanning the window.
#[derive(Debug, Clone, Copy)]
pub struct UnitScale {
    /// `log2` of the mesh cell side.
    pub cell_log2: i32,
    /// u-cells per axis across the window: `3·2^resolution`.
    pub per_axis: i64,
    pub resolution: u32,
}

impl UnitScale {
    pub fn new(window: &Window, resolution: u32) -> Result<Self> {
        if resolution > 20 {
            return Err(Error::Usage(format!(
                "mesh resolution {resolution} is beyond the supported range"
            )));
        }
        Ok(Self {
            cell_log2: window.level - resolution as i32,
            per_axis: 3i64 << resolution,
            resolution,
        })
    }

    /// Side of a level-`k` cube in u-units: `3·2^{k − cell_log2}`.
    pub fn cube_side_u(&self, level: i32) -> Result<i64> {
        let e = level - self.cell_log2;
        if e < 0 {
            return Err(Error::Resolution(format!(
                "cube at level {level} is finer than the mesh cell (level {})",
                self.cell_log2
            )));
        }
        if e > 40 {
            return Err(Error::Usage(format!(
                "cube level {level} too coarse for u-unit arithmetic"
            )));
        }
        Ok(3i64 << e as u32)
    }

    /// Lower corner of a cube in u-units **relative to the window origin**,
    /// together with its u-side. Errors if the cube is finer than the mesh
    /// or pokes outside the window.
    pub fn cube_box_u(&self, cube: &DyadicCube, window: &Window) -> Result<(Vec<i64>, i64)> {
        let e = cube.level - self.cell_log2;
        if e < 0 {
            return Err(Error::Resolution(format!(
                "cube at level {} is finer than the mesh cell (level {})",
                cube.level, self.cell_log2
            )));
        }
        let side_u = self.cube_side_u(cube.level)?;
        let s = level_sign(cube.level);
        let win_shift = window.level - self.cell_log2; // = resolution
        let mut corner = Vec::with_capacity(cube.d());
        for j in 0..cube.d() {
            let b = if cube.beta.is_shifted(j) { s } else { 0 };
            let abs = (3 * cube.index[j] + b) << e as u32;
            let origin = (3 * window.index[j]) << win_shift as u32;
            let rel = abs - origin;
            if rel < 0 || rel + side_u > self.per_axis {
                return Err(Error::Usage(format!(
                    "cube {} lies outside the window",
                    cube.descriptor()
                )));
            }
            corner.push(rel);
        }
        Ok((corner, side_u))
    }
}

/// Every cube of `D^β` with level in `[min_level, max_level]` lying entirely
/// inside the window, ordered by level descending then index lexicographic.
pub fn enumerate_cubes(
    window: &Window,
    beta: &Shift,
    min_level: i32,
    max_level: i32,
) -> Result<Vec<DyadicCube>> {
    if beta.d() != window.d() {
        return Err(Error::Usage(format!(
            "shift dimension {} does not match window dimension {}",
            beta.d(),
            window.d()
        )));
    }
    if min_level > max_level {
        return Err(Error::Usage(format!(
            "empty level range: min {min_level} > max {max_level}"
        )));
    }
    let d = window.d();
    let mut out = Vec::new();
    for k in (min_level..=max_level).rev() {
        if k > window.level {
            continue;
        }
        let shift_w = (window.level - k) as u32;
        if shift_w > 40 {
            return Err(Error::Usage(format!(
                "level range reaches {k}, too fine relative to the window"
            )));
        }
        let s = level_sign(k);
        // Per-axis index ranges for full containment: with A = w·2^{W−k}
        // and B = (w+1)·2^{W−k}, the unshifted axes admit m ∈ [A, B−1] and
        // the shifted ones lose one slot at the signed end.
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        let mut empty = false;
        for j in 0..d {
            let a = window.index[j] << shift_w;
            let b = (window.index[j] + 1) << shift_w;
            let (l, h) = if !beta.is_shifted(j) {
                (a, b - 1)
            } else if s > 0 {
                (a, b - 2)
            } else {
                (a + 1, b - 1)
            };
            if l > h {
                empty = true;
                break;
            }
            lo.push(l);
            hi.push(h);
        }
        if empty {
            continue;
        }
        // Odometer over the index box, axis 0 slowest: lexicographic order.
        let mut m = lo.clone();
        loop {
            out.push(DyadicCube {
                beta: beta.clone(),
                level: k,
                index: m.clone(),
            });
            let mut axis = d;
            let mut advanced = false;
            while axis > 0 {
                axis -= 1;
                if m[axis] < hi[axis] {
                    m[axis] += 1;
                    advanced = true;
                    break;
                }
                m[axis] = lo[axis];
            }
            if !advanced {
                break;
            }
        }
    }
    Ok(out)
}

/// Grid cubes in the level range that have no parent inside the window —
/// the forest roots from which every in-window cube descends.
pub fn grid_roots(
    window: &Window,
    beta: &Shift,
    min_level: i32,
    max_level: i32,
) -> Result<Vec<DyadicCube>> {
    let all = enumerate_cubes(window, beta, min_level, max_level)?;
    Ok(all
        .into_iter()
        .filter(|c| c.level == max_level || !window.contains_cube(&c.parent()))
        .collect())
}

/// Number of search levels above the minimal one tried by [`cover_cube`].
const COVER_EXTRA_LEVELS: i32 = 3;

/// Finds a grid cube containing an arbitrary axis-parallel cube, with side
/// at most 6 times larger.
///
/// Searches levels from the smallest with `2^k ≥ side` upward (so the first
/// hit has minimal grid side), trying every shift at each level in
/// lexicographic order; within a `(k, β)` pair the candidate indices near
/// the corner are probed with ±1 slack per axis against float rounding.
pub fn cover_cube(corner: &[f64], side: f64) -> Result<(Shift, DyadicCube)> {
    let d = corner.len();
    if d == 0 || !(side > 0.0) || !side.is_finite() || corner.iter().any(|c| !c.is_finite()) {
        return Err(Error::Usage(
            "cover search needs a nondegenerate finite cube".into(),
        ));
    }
    let k1 = side.log2().ceil() as i32;
    let shifts = Shift::all(d);
    for k in k1..=k1 + COVER_EXTRA_LEVELS {
        let scale = (k as f64).exp2();
        for beta in &shifts {
            let s = level_sign(k) as f64;
            let base: Vec<i64> = (0..d)
                .map(|j| {
                    let b = if beta.is_shifted(j) { 1.0 / 3.0 } else { 0.0 };
                    (corner[j] / scale - s * b).floor() as i64
                })
                .collect();
            // 3^d offset combinations around the nominal index, the
            // nominal candidate first.
            for code in 0..3usize.pow(d as u32) {
                let mut c = code;
                let index: Vec<i64> = (0..d)
                    .map(|j| {
                        let digit = c % 3;
                        c /= 3;
                        base[j]
                            + match digit {
                                0 => 0,
                                1 => -1,
                                _ => 1,
                            }
                    })
                    .collect();
                let cube = DyadicCube {
                    beta: beta.clone(),
                    level: k,
                    index,
                };
                let r_corner = cube.corner();
                let r_side = cube.side();
                let inside = (0..d).all(|j| {
                    r_corner[j] <= corner[j] && corner[j] + side <= r_corner[j] + r_side
                });
                if inside {
                    return Ok((beta.clone(), cube));
                }
            }
        }
    }
    Err(Error::Domain(format!(
        "no covering grid cube found within {COVER_EXTRA_LEVELS} levels; \
         input side {side}"
    )))
}

/// Dense bitset over the u-cell lattice of a window: `(3·2^L)^d` cells in
/// row-major order, axis 0 most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    pub per_axis: i64,
    pub d: usize,
    words: Vec<u64>,
    bits: usize,
}

impl CellMask {
    pub fn new_empty(per_axis: i64, d: usize) -> Result<Self> {
        let total = (per_axis as u128).checked_pow(d as u32).ok_or_else(|| {
            Error::Usage("mask dimensions overflow".into())
        })?;
        if total > (1u128 << 31) {
            return Err(Error::Usage(format!(
                "mask of {total} cells exceeds the supported size"
            )));
        }
        let bits = total as usize;
        Ok(Self {
            per_axis,
            d,
            words: vec![0u64; bits.div_ceil(64)],
            bits,
        })
    }

    /// Mask at the u-resolution of `scale` (3·2^L cells per axis).
    pub fn for_scale(scale: &UnitScale, d: usize) -> Result<Self> {
        Self::new_empty(scale.per_axis, d)
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn flat(&self, coords: &[i64]) -> usize {
        let mut idx = 0usize;
        for &c in coords {
            debug_assert!((0..self.per_axis).contains(&c));
            idx = idx * self.per_axis as usize + c as usize;
        }
        idx
    }

    pub fn get(&self, coords: &[i64]) -> bool {
        self.get_flat(self.flat(coords))
    }

    pub fn get_flat(&self, idx: usize) -> bool {
        (self.words[idx / 64] >> (idx % 64)) & 1 == 1
    }

    pub fn set_flat(&mut self, idx: usize) {
        self.words[idx / 64] |= 1u64 << (idx % 64);
    }

    /// Sets every u-cell of an axis-parallel box (relative corner + side).
    pub fn set_box(&mut self, corner: &[i64], side: i64) {
        self.for_each_box_run(corner, side, |words, start, len| {
            fill_run(words, start, len);
        });
    }

    /// Clears every u-cell of the box.
    pub fn clear_box(&mut self, corner: &[i64], side: i64) {
        self.for_each_box_run(corner, side, |words, start, len| {
            clear_run(words, start, len);
        });
    }

    /// Number of set cells inside the box.
    pub fn count_in_box(&self, corner: &[i64], side: i64) -> u64 {
        let mut total = 0u64;
        self.walk_box_runs(corner, side, |start, len| {
            total += count_run(&self.words, start, len);
        });
        total
    }

    fn for_each_box_run(
        &mut self,
        corner: &[i64],
        side: i64,
        mut f: impl FnMut(&mut [u64], usize, usize),
    ) {
        debug_assert_eq!(corner.len(), self.d);
        let per = self.per_axis as usize;
        let side = side as usize;
        if self.d == 1 {
            f(&mut self.words, corner[0] as usize, side);
            return;
        }
        let outer_axes = self.d - 1;
        let mut cursor = vec![0usize; outer_axes];
        loop {
            let mut base = 0usize;
            for j in 0..outer_axes {
                base = base * per + corner[j] as usize + cursor[j];
            }
            base = base * per + corner[outer_axes] as usize;
            f(&mut self.words, base, side);
            let mut axis = outer_axes;
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

    fn walk_box_runs(&self, corner: &[i64], side: i64, mut f: impl FnMut(usize, usize)) {
        debug_assert_eq!(corner.len(), self.d);
        let per = self.per_axis as usize;
        let side = side as usize;
        if self.d == 1 {
            f(corner[0] as usize, side);
            return;
        }
        let outer_axes = self.d - 1;
        let mut cursor = vec![0usize; outer_axes];
        loop {
            let mut base = 0usize;
            for j in 0..outer_axes {
                base = base * per + corner[j] as usize + cursor[j];
            }
            base = base * per + corner[outer_axes] as usize;
            f(base, side);
            let mut axis = outer_axes;
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

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn intersection_count(&self, other: &Self) -> u64 {
        self.words
            .iter()
            .zip(other.words.iter())
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.words.iter().zip(other.words.iter()).all(|(a, b)| a & b == 0)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.words
            .iter()
            .zip(other.words.iter())
            .all(|(a, b)| a & !b == 0)
    }

    pub fn union_in_place(&mut self, other: &Self) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a |= b;
        }
    }

    pub fn subtract(&mut self, other: &Self) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a &= !b;
        }
    }

    /// Iterator over set flat indices, ascending.
    pub fn iter_set(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    /// Maximal runs of set cells in flat order, as `(start, len)` pairs.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut run_start = None;
        let mut prev = 0usize;
        for idx in self.iter_set() {
            match run_start {
                None => run_start = Some(idx),
                Some(_) if idx == prev + 1 => {}
                Some(s) => {
                    out.push((s, prev - s + 1));
                    run_start = Some(idx);
                }
            }
            prev = idx;
        }
        if let Some(s) = run_start {
            out.push((s, prev - s + 1));
        }
        out
    }

    pub fn from_runs(per_axis: i64, d: usize, runs: &[(usize, usize)]) -> Result<Self> {
        let mut mask = Self::new_empty(per_axis, d)?;
        for &(start, len) in runs {
            if start + len > mask.bits {
                return Err(Error::Parse(format!(
                    "mask run {start}+{len} exceeds {} cells",
                    mask.bits
                )));
            }
            fill_run(&mut mask.words, start, len);
        }
        Ok(mask)
    }
}

fn fill_run(words: &mut [u64], start: usize, len: usize) {
    if len == 0 {
        return;
    }
    let end = start + len; // exclusive
    let (w0, w1) = (start / 64, (end - 1) / 64);
    if w0 == w1 {
        let mask = shifted_ones(start % 64, end - start);
        words[w0] |= mask;
        return;
    }
    words[w0] |= !0u64 << (start % 64);
    for w in &mut words[w0 + 1..w1] {
        *w = !0;
    }
    let tail = end - w1 * 64;
    words[w1] |= shifted_ones(0, tail);
}

fn clear_run(words: &mut [u64], start: usize, len: usize) {
    if len == 0 {
        return;
    }
    let end = start + len;
    let (w0, w1) = (start / 64, (end - 1) / 64);
    if w0 == w1 {
        words[w0] &= !shifted_ones(start % 64, end - start);
        return;
    }
    words[w0] &= !(!0u64 << (start % 64));
    for w in &mut words[w0 + 1..w1] {
        *w = 0;
    }
    let tail = end - w1 * 64;
    words[w1] &= !shifted_ones(0, tail);
}

fn count_run(words: &[u64], start: usize, len: usize) -> u64 {
    if len == 0 {
        return 0;
    }
    let end = start + len;
    let (w0, w1) = (start / 64, (end - 1) / 64);
    if w0 == w1 {
        return (words[w0] & shifted_ones(start % 64, len)).count_ones() as u64;
    }
    let mut total = (words[w0] & (!0u64 << (start % 64))).count_ones() as u64;
    for w in &words[w0 + 1..w1] {
        total += w.count_ones() as u64;
    }
    let tail = end - w1 * 64;
    total + (words[w1] & shifted_ones(0, tail)).count_ones() as u64
}

/// `len` ones starting at bit `off` (len in 1..=64, off+len ≤ 64).
fn shifted_ones(off: usize, len: usize) -> u64 {
    if len >= 64 {
        !0u64 << off
    } else {
        ((1u64 << len) - 1) << off
    }
}

/// One cube of a sparse family together with its generation index and the
/// u-cell mask of its set `E_Q`.
#[derive(Debug, Clone)]
pub struct SparseEntry {
    pub cube: DyadicCube,
    /// Generation index `k`: the cube belongs to the `k`-th stopping
    /// generation (not its dyadic level).
    pub generation: i32,
    pub e_mask: CellMask,
}

/// A candidate sparse family over one grid, with the mesh it is resolved on.
#[derive(Debug, Clone)]
pub struct SparseFamily {
    pub beta: Shift,
    pub entries: Vec<SparseEntry>,
    /// Measured packing ratio `max |A_{k+1} ∩ Q| / |Q|`.
    pub packing: f64,
    /// The ratio base used to build the family (informational).
    pub base: f64,
    pub window: Window,
    pub resolution: u32,
}

/// Per-invariant outcome of sparse validation.
#[derive(Debug, Clone, Copy)]
pub struct SparseValidation {
    pub same_generation_disjoint: bool,
    pub generations_nested: bool,
    pub packing_bounded: bool,
    pub e_sets_disjoint: bool,
    pub e_inside_cube: bool,
    pub e_carries_half: bool,
    pub measured_packing: f64,
    pub pass: bool,
}

/// Checks the sparse-family invariants exactly on u-cell masks.
///
/// All comparisons are integer (`2·count ≤ total` instead of ratios), so
/// the boundary case of packing exactly one half passes without float slop.
pub fn validate_sparse(family: &SparseFamily) -> Result<SparseValidation> {
    let scale = UnitScale::new(&family.window, family.resolution)?;
    let d = family.window.d();

    // Group by generation, ascending.
    let mut generations: std::collections::BTreeMap<i32, Vec<&SparseEntry>> =
        std::collections::BTreeMap::new();
    for entry in &family.entries {
        generations.entry(entry.generation).or_default().push(entry);
    }

    let mut same_generation_disjoint = true;
    let mut e_inside_cube = true;
    let mut e_carries_half = true;
    let mut e_sets_disjoint = true;
    let mut packing_bounded = true;
    let mut generations_nested = true;
    let mut measured_packing = 0.0f64;

    // Per-generation union masks A_k.
    let mut union_masks: std::collections::BTreeMap<i32, CellMask> =
        std::collections::BTreeMap::new();
    for (&generation, entries) in &generations {
        let mut union = CellMask::for_scale(&scale, d)?;
        for entry in entries.iter() {
            let (corner, side) = scale.cube_box_u(&entry.cube, &family.window)?;
            let before = union.count_in_box(&corner, side);
            if before > 0 {
                same_generation_disjoint = false;
            }
            union.set_box(&corner, side);
        }
        union_masks.insert(generation, union);
    }

    // Nesting A_{k+1} ⊆ A_k for consecutive generations present.
    let generations_list: Vec<i32> = union_masks.keys().cloned().collect();
    for pair in generations_list.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi == lo + 1 && !union_masks[&hi].is_subset_of(&union_masks[&lo]) {
            generations_nested = false;
        }
    }

    // Packing and E-set checks per cube.
    let mut e_union = CellMask::for_scale(&scale, d)?;
    for (&generation, entries) in &generations {
        let next = union_masks.get(&(generation + 1));
        for entry in entries.iter() {
            let (corner, side) = scale.cube_box_u(&entry.cube, &family.window)?;
            let total = (side as u128).pow(d as u32) as u64;
            let covered = match next {
                Some(mask) => mask.count_in_box(&corner, side),
                None => 0,
            };
            if 2 * covered > total {
                packing_bounded = false;
            }
            if total > 0 {
                measured_packing = measured_packing.max(covered as f64 / total as f64);
            }
            // E_Q ⊆ Q
            let e_count = entry.e_mask.count();
            let e_in_q = entry.e_mask.count_in_box(&corner, side);
            if e_in_q != e_count {
                e_inside_cube = false;
            }
            if 2 * e_count < total {
                e_carries_half = false;
            }
            if !e_union.is_disjoint(&entry.e_mask) {
                e_sets_disjoint = false;
            }
            e_union.union_in_place(&entry.e_mask);
        }
    }

    let pass = same_generation_disjoint
        && generations_nested
        && packing_bounded
        && e_sets_disjoint
        && e_inside_cube
        && e_carries_half;
    Ok(SparseValidation {
        same_generation_disjoint,
        generations_nested,
        packing_bounded,
        e_sets_disjoint,
        e_inside_cube,
        e_carries_half,
        measured_packing,
        pass,
    })
}

impl SparseFamily {
    /// Line-oriented text form: a `#`-header with the window, resolution,
    /// shift, and base, then one line per cube:
    /// `<cube-descriptor>|gen=<k>|E=<start+len,...>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# sparse window={}:{};L={};beta={};base={}\n",
            self.window.level,
            self.window
                .index
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.resolution,
            self.beta.descriptor(),
            self.base,
        ));
        for entry in &self.entries {
            let runs = entry
                .e_mask
                .runs()
                .into_iter()
                .map(|(s, l)| format!("{s}+{l}"))
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&format!(
                "{}|gen={}|E={}\n",
                entry.cube.descriptor(),
                entry.generation,
                runs
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty sparse family file".into()))?;
        let header = header
            .strip_prefix("# sparse ")
            .ok_or_else(|| Error::Parse("sparse family file must start with `# sparse `".into()))?;
        let mut window = None;
        let mut resolution = None;
        let mut beta = None;
        let mut base = 2.0f64;
        for part in header.split(';') {
            let part = part.trim();
            if let Some(v) = part.strip_prefix("window=") {
                let (lvl, idx) = v.split_once(':').ok_or_else(|| {
                    Error::Parse(format!("bad window field `{v}`"))
                })?;
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
            } else if let Some(v) = part.strip_prefix("beta=") {
                beta = Some(Shift::from_descriptor(v)?);
            } else if let Some(v) = part.strip_prefix("base=") {
                base = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad base `{v}`")))?;
            }
        }
        let window = window.ok_or_else(|| Error::Parse("header missing window=".into()))?;
        let resolution =
            resolution.ok_or_else(|| Error::Parse("header missing L=".into()))?;
        let beta = beta.ok_or_else(|| Error::Parse("header missing beta=".into()))?;
        let scale = UnitScale::new(&window, resolution)?;
        let d = window.d();

        let mut entries = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('|');
            let cube_text = fields
                .next()
                .ok_or_else(|| Error::Parse(format!("bad sparse line `{line}`")))?;
            let cube = DyadicCube::from_descriptor(cube_text)?;
            let gen_text = fields
                .next()
                .and_then(|f| f.strip_prefix("gen="))
                .ok_or_else(|| Error::Parse(format!("sparse line missing gen=: `{line}`")))?;
            let generation: i32 = gen_text
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad generation `{gen_text}`")))?;
            let runs_text = fields
                .next()
                .and_then(|f| f.strip_prefix("E="))
                .ok_or_else(|| Error::Parse(format!("sparse line missing E=: `{line}`")))?;
            let mut runs = Vec::new();
            for run in runs_text.split(',').filter(|r| !r.trim().is_empty()) {
                let (s, l) = run
                    .split_once('+')
                    .ok_or_else(|| Error::Parse(format!("bad mask run `{run}`")))?;
                let start: usize = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad run start `{s}`")))?;
                let len: usize = l
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad run length `{l}`")))?;
                runs.push((start, len));
            }
            let e_mask = CellMask::from_runs(scale.per_axis, d, &runs)?;
            entries.push(SparseEntry {
                cube,
                generation,
                e_mask,
            });
        }
        let mut family = SparseFamily {
            beta,
            entries,
            packing: 0.0,
            base,
            window,
            resolution,
        };
        family.packing = validate_sparse(&family)?.measured_packing;
        Ok(family)
    }
}
