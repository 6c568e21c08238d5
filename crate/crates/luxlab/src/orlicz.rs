//! Modulars and Luxemburg norms on weighted Orlicz spaces of mesh fields.
//!
//! The modular of `f` against weight `σ` is the exact cell sum
//! `Σ Φ(|f_c|)·σ_c·cellvolume`; the Luxemburg norm is the infimum of
//! `λ > 0` with `modular(f/λ) ≤ 1`, located by bisection on the
//! nonincreasing map `λ ↦ modular(f/λ)`. The returned value is always the
//! *upper* bracket end, so `modular(f/value) ≤ 1` holds by construction —
//! downstream inequality chains rely on that certificate.

use crate::field::MeshField;
use crate::growth::GrowthFunction;
use crate::numerics::Accumulator;
use crate::{Error, Result};

/// Default relative bracket-width tolerance for the norm bisection.
pub const NORM_TOL: f64 = 1e-10;
/// Residual target: bisection refines until `|modular(f/λ) − 1|` is this
/// small (or the bracket hits the float floor).
const RESIDUAL_TARGET: f64 = 1e-9;
const MAX_ITERATIONS: u32 = 200;

/// Outcome of a Luxemburg norm computation.
#[derive(Debug, Clone, Copy)]
pub struct NormResult {
    pub value: f64,
    pub iterations: u32,
    /// `|modular(f/value) − 1|` for finite positive values.
    pub residual: f64,
}

fn check_same_mesh(f: &MeshField, sigma: &MeshField) -> Result<()> {
    if f.window != sigma.window || f.resolution != sigma.resolution {
        return Err(Error::Usage(
            "function and weight must live on the same mesh".into(),
        ));
    }
    Ok(())
}

/// `Σ Φ(|f_c|/λ)·σ_c·cellvolume` — the shared arithmetic for the modular
/// (λ = 1), the norm bisection, and bound certification, so all three see
/// bit-identical values.
fn scaled_modular(
    phi: &GrowthFunction,
    f: &MeshField,
    sigma: &MeshField,
    lambda: f64,
) -> Result<f64> {
    let mut acc = Accumulator::new();
    let sv = sigma.values();
    for (&fc, &sc) in f.values().iter().zip(sv.iter()) {
        let a = fc.abs();
        if a == 0.0 {
            continue;
        }
        let term = phi.eval(a / lambda)? * sc;
        acc.add(term);
        if term.is_infinite() {
            break;
        }
    }
    Ok(acc.total() * f.cell_volume())
}

/// The modular `∫ Φ(|f|)σ` over the window.
pub fn modular(phi: &GrowthFunction, f: &MeshField, sigma: &MeshField) -> Result<f64> {
    check_same_mesh(f, sigma)?;
    scaled_modular(phi, f, sigma, 1.0)
}

/// The Luxemburg norm `inf{λ > 0 : ∫ Φ(|f|/λ)σ ≤ 1}`.
///
/// `tol` is the relative bracket-width stopping tolerance (use
/// [`NORM_TOL`] by default). A field with a non-finite cell magnitude has
/// norm `+∞`, reported as a value rather than an error.
pub fn luxemburg_norm(
    phi: &GrowthFunction,
    f: &MeshField,
    sigma: &MeshField,
    tol: f64,
) -> Result<NormResult> {
    check_same_mesh(f, sigma)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Usage(format!(
            "norm tolerance must be positive and finite, got {tol}"
        )));
    }
    if f.values().iter().any(|v| !v.is_finite()) {
        return Ok(NormResult {
            value: f64::INFINITY,
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    if f.values().iter().all(|&v| v == 0.0) {
        return Ok(NormResult {
            value: 0.0,
            iterations: 0,
            residual: 0.0,
        });
    }
    let h = |lambda: f64| scaled_modular(phi, f, sigma, lambda);

    // Starting guess: the plain modular, clipped into representable range.
    let lambda0 = modular(phi, f, sigma)?.clamp(1e-300, 1e300);
    let mut iterations = 0u32;

    // Bracket [lo, hi] with h(lo) > 1 ≥ h(hi).
    let (mut lo, mut hi, mut h_hi);
    let h0 = h(lambda0)?;
    if h0 <= 1.0 {
        hi = lambda0;
        h_hi = h0;
        let mut t = lambda0;
        loop {
            let next = t / 2.0;
            if next < 1e-300 {
                // The modular never exceeds 1: the norm is below float
                // resolution; 0 is the honest limit.
                return Ok(NormResult {
                    value: 0.0,
                    iterations,
                    residual: (1.0 - h_hi).abs(),
                });
            }
            iterations += 1;
            let v = h(next)?;
            if v > 1.0 {
                lo = next;
                break;
            }
            hi = next;
            h_hi = v;
            t = next;
        }
    } else {
        lo = lambda0;
        let mut t = lambda0;
        loop {
            let next = t * 2.0;
            if next > 1e300 {
                return Err(Error::Overflow(format!(
                    "no norm bracket below 1e300 (modular still {h0:.3e} at \
                     the starting scale)"
                )));
            }
            iterations += 1;
            let v = h(next)?;
            if v <= 1.0 {
                hi = next;
                h_hi = v;
                break;
            }
            lo = next;
            t = next;
        }
    }

    // Bisect, always keeping hi on the certified side (modular ≤ 1).
    while iterations < MAX_ITERATIONS {
        let residual = (1.0 - h_hi).abs();
        if residual <= RESIDUAL_TARGET {
            break;
        }
        if hi - lo <= tol * hi && residual <= 1e-8 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let v = h(mid)?;
        if v <= 1.0 {
            hi = mid;
            h_hi = v;
        } else {
            lo = mid;
        }
    }
    Ok(NormResult {
        value: hi,
        iterations,
        residual: (1.0 - h_hi).abs(),
    })
}

/// Certifies `‖f‖ ≤ c` by checking `modular(f/c) ≤ 1` with exactly the
/// arithmetic the norm bisection uses.
pub fn norm_from_modular_bound(
    phi: &GrowthFunction,
    f: &MeshField,
    sigma: &MeshField,
    c: f64,
) -> Result<bool> {
    check_same_mesh(f, sigma)?;
    if !(c > 0.0) {
        return Err(Error::Usage(format!(
            "modular bound threshold must be positive, got {c}"
        )));
    }
    Ok(scaled_modular(phi, f, sigma, c)? <= 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::Window;
    use crate::field::{make_field, FieldGenerator, FieldKind};

    fn ones(window: &Window, resolution: u32) -> MeshField {
        make_field(
            window,
            resolution,
            FieldKind::Weight,
            &FieldGenerator::Constant(1.0),
        )
        .unwrap()
    }

    fn half_indicator(window: &Window, resolution: u32) -> MeshField {
        make_field(
            window,
            resolution,
            FieldKind::Function,
            &FieldGenerator::Indicator {
                corner: vec![0.0],
                sides: vec![0.5],
            },
        )
        .unwrap()
    }

    #[test]
    fn modular_of_half_indicator_under_square() {
        let w = Window::unit(1);
        let phi = GrowthFunction::power(2.0).unwrap();
        let m = modular(&phi, &half_indicator(&w, 4), &ones(&w, 4)).unwrap();
        assert_eq!(m, 0.5);
    }

    #[test]
    fn modular_of_zero_is_zero() {
        let w = Window::unit(1);
        let zero = make_field(&w, 3, FieldKind::Function, &FieldGenerator::Constant(0.0))
            .unwrap();
        let m = modular(&GrowthFunction::entropy(), &zero, &ones(&w, 3)).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn modular_of_ones_under_entropy_matches_closed_form() {
        let w = Window::unit(1);
        let f = make_field(&w, 5, FieldKind::Function, &FieldGenerator::Constant(1.0))
            .unwrap();
        let m = modular(&GrowthFunction::entropy(), &f, &ones(&w, 5)).unwrap();
        let expected = 2.0 * (2.0f64).ln() - 1.0;
        assert!((m - expected).abs() <= 1e-14, "{m} vs {expected}");
    }

    #[test]
    fn modular_rejects_mismatched_meshes() {
        let w = Window::unit(1);
        let f = half_indicator(&w, 3);
        let s = ones(&w, 4);
        assert!(matches!(
            modular(&GrowthFunction::entropy(), &f, &s),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn norm_of_half_indicator_is_inverse_root_two() {
        let w = Window::unit(1);
        let phi = GrowthFunction::power(2.0).unwrap();
        let n = luxemburg_norm(&phi, &half_indicator(&w, 6), &ones(&w, 6), NORM_TOL).unwrap();
        let expected = 0.5f64.sqrt();
        assert!((n.value - expected).abs() <= 1e-9, "{}", n.value);
        assert!(n.residual <= 1e-8);
        // The returned value certifies its own modular bound.
        assert!(norm_from_modular_bound(&phi, &half_indicator(&w, 6), &ones(&w, 6), n.value)
            .unwrap());
    }

    #[test]
    fn norm_of_zero_field_is_zero() {
        let w = Window::unit(1);
        let zero = make_field(&w, 4, FieldKind::Function, &FieldGenerator::Constant(0.0))
            .unwrap();
        let n = luxemburg_norm(&GrowthFunction::entropy(), &zero, &ones(&w, 4), NORM_TOL)
            .unwrap();
        assert_eq!(n.value, 0.0);
    }

    #[test]
    fn norm_of_full_indicator_is_exactly_one_under_linear_growth() {
        // h(1) = Σ 1·σ·vol = 1 exactly, so the upper bracket never moves.
        let w = Window::unit(1);
        let f = make_field(&w, 5, FieldKind::Function, &FieldGenerator::Constant(1.0))
            .unwrap();
        let phi = GrowthFunction::power(1.0).unwrap();
        let n = luxemburg_norm(&phi, &f, &ones(&w, 5), NORM_TOL).unwrap();
        assert_eq!(n.value, 1.0);
        assert_eq!(n.residual, 0.0);
    }

    #[test]
    fn norm_scales_homogeneously() {
        let w = Window::unit(1);
        let sigma = make_field(
            &w,
            5,
            FieldKind::Weight,
            &FieldGenerator::Lognormal {
                seed: 3,
                roughness: 0.7,
            },
        )
        .unwrap();
        let base = half_indicator(&w, 5);
        let phi = GrowthFunction::power_log(2.0, 1.0).unwrap();
        let n1 = luxemburg_norm(&phi, &base, &sigma, NORM_TOL).unwrap().value;
        let mut scaled = base.clone();
        for v in scaled.values_mut() {
            *v *= 3.5;
        }
        let n2 = luxemburg_norm(&phi, &scaled, &sigma, NORM_TOL).unwrap().value;
        assert!(
            (n2 - 3.5 * n1).abs() <= 1e-8 * n2.abs(),
            "{n2} vs 3.5·{n1}"
        );
    }

    #[test]
    fn unit_modular_at_the_norm() {
        let w = Window::unit(1);
        let sigma = make_field(
            &w,
            5,
            FieldKind::Weight,
            &FieldGenerator::Lognormal {
                seed: 8,
                roughness: 1.2,
            },
        )
        .unwrap();
        let f = make_field(
            &w,
            5,
            FieldKind::Function,
            &FieldGenerator::PowerSingularity {
                center: vec![0.25],
                gamma: -0.4,
            },
        )
        .unwrap();
        for phi in [
            GrowthFunction::power(1.5).unwrap(),
            GrowthFunction::entropy(),
            GrowthFunction::exp_minus_linear(),
        ] {
            let n = luxemburg_norm(&phi, &f, &sigma, NORM_TOL).unwrap();
            let mut scaled = f.clone();
            for v in scaled.values_mut() {
                *v /= n.value;
            }
            let m = modular(&phi, &scaled, &sigma).unwrap();
            assert!((m - 1.0).abs() <= 1e-6, "{} modular {m}", phi.descriptor());
        }
    }

    #[test]
    fn modular_bound_flag_matches_the_examples() {
        let w = Window::unit(1);
        let phi = GrowthFunction::power(2.0).unwrap();
        let f = half_indicator(&w, 4);
        let s = ones(&w, 4);
        assert!(norm_from_modular_bound(&phi, &f, &s, 1.0).unwrap());
        assert!(!norm_from_modular_bound(&phi, &f, &s, 0.5).unwrap());
        let zero = make_field(&w, 4, FieldKind::Function, &FieldGenerator::Constant(0.0))
            .unwrap();
        assert!(norm_from_modular_bound(&phi, &zero, &s, 0.1).unwrap());
        assert!(matches!(
            norm_from_modular_bound(&phi, &f, &s, 0.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn infinite_cells_give_an_infinite_norm() {
        let w = Window::unit(1);
        let mut f = half_indicator(&w, 3);
        f.values_mut()[0] = f64::INFINITY;
        let n = luxemburg_norm(
            &GrowthFunction::power(2.0).unwrap(),
            &f,
            &ones(&w, 3),
            NORM_TOL,
        )
        .unwrap();
        assert!(n.value.is_infinite());
    }
}
