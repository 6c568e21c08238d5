//! Small numeric utilities shared across the crate: compensated summation,
//! log-spaced grids, and a counter-based seed splitter.

/// Neumaier (improved Kahan) compensated summation.
///
/// Exact to within one final rounding for well-conditioned finite inputs.
/// A non-finite term short-circuits: the plain IEEE sum of the remaining
/// terms is returned so that `+∞` propagates as `+∞` instead of turning into
/// `NaN` through the compensation arithmetic.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut iter = terms.into_iter();
    while let Some(x) = iter.next() {
        if !x.is_finite() {
            let mut rest = sum + x;
            for y in iter {
                rest += y;
            }
            return rest;
        }
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Running compensated accumulator for callers that cannot express their
/// terms as a single iterator pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
    nonfinite: f64,
    saw_nonfinite: bool,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        if self.saw_nonfinite {
            self.nonfinite += x;
            return;
        }
        if !x.is_finite() {
            self.saw_nonfinite = true;
            self.nonfinite = self.sum + self.comp + x;
            return;
        }
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        if self.saw_nonfinite {
            self.nonfinite
        } else {
            self.sum + self.comp
        }
    }
}

/// `count` log-spaced points on `[lo, hi]`, endpoints exact.
///
/// Requires `0 < lo < hi` and `count >= 2`; violations yield an empty grid,
/// which callers treat as a precondition failure.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) || count < 2 {
        return Vec::new();
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (count - 1) as f64;
    let mut grid = Vec::with_capacity(count);
    grid.push(lo);
    for i in 1..count - 1 {
        grid.push((a + step * i as f64).exp());
    }
    grid.push(hi);
    grid
}

/// SplitMix64 finalizer. Used to derive independent per-trial seeds from a
/// master seed and a trial index so that parallel and serial experiment runs
/// agree bit for bit.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
