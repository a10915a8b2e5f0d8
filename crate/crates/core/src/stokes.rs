//! Stokes vectors and Gaussian polarization-noise bookkeeping.
//!
//! Noise is carried as Stokes variances (plus the S1-S2 covariance), normalized so
//! that a coherent state has `v1 = v2 = v3 = 1` (the shot-noise level). Levels
//! in decibels use the power convention `V = 10^(dB/10)`; negative values are
//! squeezed.
//!
//! Rotation angles are Poincaré-sphere angles. A physical rotation of the
//! polarization plane by `α` moves the Stokes vector by `2α` on the sphere;
//! callers holding physical angles must double them before calling
//! [`rotate_about_s3`].

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

const POLARIZATION_TOL: f64 = 1e-9;

/// Convert a squeezing level in dB to a variance in shot-noise units.
pub fn squeezing_db_to_variance(level_db: f64) -> Result<f64> {
    ensure_finite("squeezing level", level_db)?;
    Ok(10f64.powf(level_db / 10.0))
}

/// Convert a variance in shot-noise units to dB.
pub fn variance_to_db(variance: f64) -> Result<f64> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Domain(format!("variance must be positive and finite, got {variance}")));
    }
    Ok(10.0 * variance.log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> Result<Self> {
        for (name, v) in [("s0", s0), ("s1", s1), ("s2", s2), ("s3", s3)] {
            ensure_finite(name, v)?;
        }
        if s0 < 0.0 {
            return Err(Error::Domain(format!("s0 must be non-negative, got {s0}")));
        }
        let polarized = (s1 * s1 + s2 * s2 + s3 * s3).sqrt();
        if polarized > s0 * (1.0 + POLARIZATION_TOL) + f64::MIN_POSITIVE {
            return Err(Error::Domain(format!("polarized intensity {polarized} exceeds total intensity {s0}")));
        }
        Ok(Self { s0, s1, s2, s3 })
    }

    /// Horizontally polarized light of total flux `s0`.
    pub fn horizontal(s0: f64) -> Result<Self> {
        Self::new(s0, s0, 0.0, 0.0)
    }

    pub fn i_h(&self) -> f64 {
        (self.s0 + self.s1) / 2.0
    }

    pub fn i_v(&self) -> f64 {
        (self.s0 - self.s1) / 2.0
    }

    pub fn i_p45(&self) -> f64 {
        (self.s0 + self.s2) / 2.0
    }

    pub fn i_m45(&self) -> f64 {
        (self.s0 - self.s2) / 2.0
    }

    pub fn degree_of_polarization(&self) -> f64 {
        if self.s0 == 0.0 {
            return 0.0;
        }
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt() / self.s0
    }
}

/// Stokes noise variances normalized to the shot-noise level.
///
/// `c12` is the S1-S2 covariance. It is zero for every state built here and
/// only becomes non-zero under rotation; it is kept so that successive
/// rotations compose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseVariances {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    #[serde(default)]
    pub c12: f64,
}

impl NoiseVariances {
    pub fn new(v1: f64, v2: f64, v3: f64) -> Result<Self> {
        for (name, v) in [("v1", v1), ("v2", v2), ("v3", v3)] {
            ensure_finite(name, v)?;
            if v <= 0.0 {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { v1, v2, v3, c12: 0.0 })
    }

    pub fn coherent() -> Self {
        Self { v1: 1.0, v2: 1.0, v3: 1.0, c12: 0.0 }
    }

    /// A state with `S2` squeezed and `S3` anti-squeezed by the given levels.
    ///
    /// Rejects pairs that would violate `v2 * v3 >= 1`.
    pub fn from_squeezing_pair(squeezed_db: f64, anti_squeezed_db: f64) -> Result<Self> {
        let v2 = squeezing_db_to_variance(squeezed_db)?;
        let v3 = squeezing_db_to_variance(anti_squeezed_db)?;
        if v2 * v3 < 1.0 - 1e-6 {
            return Err(Error::Domain(format!(
                "squeezing pair ({squeezed_db} dB, {anti_squeezed_db} dB) violates the uncertainty bound"
            )));
        }
        Self::new(1.0, v2, v3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationState {
    pub mean: StokesVector,
    pub noise: NoiseVariances,
}

impl PolarizationState {
    /// Horizontally polarized coherent probe.
    pub fn coherent(s0: f64) -> Result<Self> {
        Ok(Self { mean: StokesVector::horizontal(s0)?, noise: NoiseVariances::coherent() })
    }

    /// Horizontally polarized probe with the given S2/S3 noise.
    pub fn squeezed(s0: f64, v2: f64, v3: f64) -> Result<Self> {
        Ok(Self { mean: StokesVector::horizontal(s0)?, noise: NoiseVariances::new(1.0, v2, v3)? })
    }
}

/// Mean balanced-polarimeter output, `I(+45) - I(-45)`.
pub fn polarimeter_s2(state: &PolarizationState) -> f64 {
    state.mean.i_p45() - state.mean.i_m45()
}

/// Rotate a state about the S3 axis by the Poincaré angle `phi` (radians).
///
/// Means rotate exactly and the (S1, S2) covariance block rotates as
/// `R C R^T`, so `v1 + v2` is conserved. Starting from uncorrelated noise this
/// gives `v2' = v1 sin^2 + v2 cos^2`. For small angles the mean reduces to
/// `s2 + s1 * phi`.
pub fn rotate_about_s3(state: &PolarizationState, phi: f64) -> Result<PolarizationState> {
    ensure_finite("rotation angle", phi)?;
    if phi.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::OutOfRange(format!("|phi| must be below pi/2, got {phi}")));
    }
    let (sin, cos) = phi.sin_cos();
    let (c2, s2, cs) = (cos * cos, sin * sin, cos * sin);
    let m = state.mean;
    let n = state.noise;
    Ok(PolarizationState {
        mean: StokesVector { s0: m.s0, s1: m.s1 * cos - m.s2 * sin, s2: m.s1 * sin + m.s2 * cos, s3: m.s3 },
        noise: NoiseVariances {
            v1: n.v1 * c2 + n.v2 * s2 - 2.0 * cs * n.c12,
            v2: n.v1 * s2 + n.v2 * c2 + 2.0 * cs * n.c12,
            v3: n.v3,
            c12: cs * (n.v1 - n.v2) + (c2 - s2) * n.c12,
        },
    })
}

/// Output S2 variance when an independent rotation noise adds `s1^2 * var(phi)`.
pub fn output_s2_variance(v2_in: f64, s1: f64, var_phi: f64) -> Result<f64> {
    ensure_finite("v2_in", v2_in)?;
    ensure_finite("s1", s1)?;
    ensure_finite("var_phi", var_phi)?;
    if v2_in <= 0.0 {
        return Err(Error::Domain(format!("v2_in must be positive, got {v2_in}")));
    }
    if var_phi < 0.0 {
        return Err(Error::Domain(format!("var_phi must be non-negative, got {var_phi}")));
    }
    Ok(v2_in + s1 * s1 * var_phi)
}

/// Semi-axes of the noise ellipsoid, `sigma_i = sqrt(v_i)`.
pub fn noise_ellipsoid_sigma(noise: &NoiseVariances) -> (f64, f64, f64) {
    (noise.v1.sqrt(), noise.v2.sqrt(), noise.v3.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn db_conversions() {
        assert_eq!(squeezing_db_to_variance(0.0).unwrap(), 1.0);
        assert!(rel(squeezing_db_to_variance(-3.7).unwrap(), 0.42658) < 1e-4);
        assert!(rel(squeezing_db_to_variance(7.0).unwrap(), 5.0119) < 1e-4);
        assert_eq!(variance_to_db(1.0).unwrap(), 0.0);
        assert!((variance_to_db(0.42658).unwrap() + 3.7).abs() < 1e-4);
        assert!((variance_to_db(0.47863).unwrap() + 3.2).abs() < 1e-4);
    }

    #[test]
    fn db_conversion_errors() {
        assert!(matches!(squeezing_db_to_variance(f64::NAN), Err(Error::InvalidArgument(_))));
        assert!(matches!(squeezing_db_to_variance(f64::INFINITY), Err(Error::InvalidArgument(_))));
        assert!(matches!(variance_to_db(0.0), Err(Error::Domain(_))));
        assert!(matches!(variance_to_db(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn stokes_invariants() {
        assert!(StokesVector::new(1.0, 1.0, 0.1, 0.0).is_err());
        assert!(StokesVector::new(-1.0, 0.0, 0.0, 0.0).is_err());
        let s = StokesVector::new(2.0, 1.9, 0.6244, 0.0).unwrap();
        assert_eq!(s.i_h() + s.i_v(), s.s0);
        assert_eq!(s.i_p45() + s.i_m45(), s.s0);
    }

    #[test]
    fn polarimeter_reads_s2() {
        let st = |s: StokesVector| PolarizationState { mean: s, noise: NoiseVariances::coherent() };
        assert_eq!(polarimeter_s2(&st(StokesVector::new(1.0, 1.0, 0.0, 0.0).unwrap())), 0.0);
        assert_eq!(polarimeter_s2(&st(StokesVector::new(1.0, 0.0, 1.0, 0.0).unwrap())), 1.0);
        // Intensities built independently from the definitions.
        // 1.9^2 + 0.6245^2 overshoots 2^2 by 2.5e-7, so bypass the validating constructor.
        let s = StokesVector { s0: 2.0, s1: 1.9, s2: 0.6245, s3: 0.0 };
        let (p45, m45) = ((2.0 + 0.6245) / 2.0, (2.0 - 0.6245) / 2.0);
        assert!((polarimeter_s2(&st(s)) - (p45 - m45)).abs() < 1e-15);
        assert!((polarimeter_s2(&st(s)) - 0.6245).abs() < 1e-15);
    }

    #[test]
    fn rotation_examples() {
        let pcs = PolarizationState::coherent(1.0).unwrap();
        let same = rotate_about_s3(&pcs, 0.0).unwrap();
        assert_eq!(same, pcs);

        let r = rotate_about_s3(&pcs, 1e-4).unwrap();
        assert!((r.mean.s2 - 1e-4).abs() < 1e-12);

        let pss = PolarizationState::squeezed(1.0, 0.4266, 1.0 / 0.4266).unwrap();
        let r = rotate_about_s3(&pss, FRAC_PI_4).unwrap();
        assert!((r.noise.v2 - 0.7133).abs() < 1e-12);
    }

    #[test]
    fn rotation_matches_linearization_below_one_mrad() {
        let s = PolarizationState::coherent(3.0).unwrap();
        for phi in [-1e-3, -2.5e-4, 1e-5, 7e-4, 1e-3] {
            let r = rotate_about_s3(&s, phi).unwrap();
            let lin = s.mean.s2 + s.mean.s1 * phi;
            assert!(rel(r.mean.s2, lin) < 1e-6, "phi={phi}");
        }
    }

    #[test]
    fn rotation_out_of_range() {
        let s = PolarizationState::coherent(1.0).unwrap();
        assert!(matches!(rotate_about_s3(&s, std::f64::consts::FRAC_PI_2), Err(Error::OutOfRange(_))));
        assert!(rotate_about_s3(&s, -2.0).is_err());
    }

    /// Rotating Gaussian samples of (S1, S2) noise and measuring the S2
    /// variance gives the diagonal-rotation rule.
    #[test]
    fn rotated_variance_matches_sampled_rotation() {
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        use rand_distr::{Distribution, Normal};

        let (v1, v2) = (1.0, 0.4266);
        let phi = FRAC_PI_4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d1 = Normal::new(0.0, f64::sqrt(v1)).unwrap();
        let d2 = Normal::new(0.0, f64::sqrt(v2)).unwrap();
        let n = 1_000_000;
        let (sin, cos) = phi.sin_cos();
        let mut acc = 0.0;
        for _ in 0..n {
            let (a, b) = (d1.sample(&mut rng), d2.sample(&mut rng));
            let out = a * sin + b * cos;
            acc += out * out;
        }
        let sampled = acc / n as f64;
        let expected = 0.7133;
        // Var of the estimator: 2*sigma^4/n.
        let se = expected * (2.0 / n as f64).sqrt();
        assert!((sampled - expected).abs() < 5.0 * se, "sampled {sampled}");
    }

    #[test]
    fn output_variance_examples() {
        assert_eq!(output_s2_variance(1.0, 123.0, 0.0).unwrap(), 1.0);
        assert!((output_s2_variance(0.4266, 1.0, 0.1).unwrap() - 0.5266).abs() < 1e-12);
        assert!((output_s2_variance(0.4266, 2.0, 0.05).unwrap() - 0.6266).abs() < 1e-12);
        assert!(matches!(output_s2_variance(1.0, 1.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn ellipsoid_examples() {
        assert_eq!(noise_ellipsoid_sigma(&NoiseVariances::coherent()), (1.0, 1.0, 1.0));
        let (a, b, c) = noise_ellipsoid_sigma(&NoiseVariances::new(1.0, 0.42658, 5.0119).unwrap());
        assert_eq!(a, 1.0);
        assert!((b - 0.65314).abs() < 1e-5);
        assert!((c - 2.2387).abs() < 1e-4);
        assert_eq!(noise_ellipsoid_sigma(&NoiseVariances::new(4.0, 1.0, 1.0).unwrap()), (2.0, 1.0, 1.0));
    }

    #[test]
    fn squeezing_pair_guard() {
        let n = NoiseVariances::from_squeezing_pair(-4.0, 7.0).unwrap();
        assert!(n.v2 * n.v3 >= 1.0);
        assert!(NoiseVariances::from_squeezing_pair(-4.0, 3.0).is_err());
        let min = NoiseVariances::from_squeezing_pair(-3.0, 3.0).unwrap();
        assert!((min.v2 * min.v3 - 1.0).abs() < 1e-6);
        assert!(NoiseVariances::new(0.0, 1.0, 1.0).is_err());
    }

    fn state_strategy() -> impl Strategy<Value = PolarizationState> {
        (0.1f64..10.0, 0.0f64..std::f64::consts::TAU, -1.0f64..1.0, 0.05f64..5.0, 0.05f64..5.0, 0.05f64..5.0).prop_map(
            |(s0, psi, h, v1, v2, v3)| {
                // Fully polarized point at latitude asin(h).
                let r = (1.0 - h * h).sqrt();
                PolarizationState {
                    mean: StokesVector { s0, s1: s0 * r * psi.cos(), s2: s0 * r * psi.sin(), s3: s0 * h },
                    noise: NoiseVariances { v1, v2, v3, c12: 0.0 },
                }
            },
        )
    }

    proptest! {
        #[test]
        fn db_round_trip(x in -20.0f64..20.0) {
            let back = variance_to_db(squeezing_db_to_variance(x).unwrap()).unwrap();
            prop_assert!((back - x).abs() < 1e-12);
        }

        #[test]
        fn rotations_compose(s in state_strategy(), a in -0.7f64..0.7, b in -0.7f64..0.7) {
            let two = rotate_about_s3(&rotate_about_s3(&s, a).unwrap(), b).unwrap();
            let one = rotate_about_s3(&s, a + b).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(s.mean.s0);
            prop_assert!(close(two.mean.s1, one.mean.s1));
            prop_assert!(close(two.mean.s2, one.mean.s2));
            let vclose = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
            prop_assert!(vclose(two.noise.v1, one.noise.v1));
            prop_assert!(vclose(two.noise.v2, one.noise.v2));
            prop_assert!(vclose(two.noise.c12, one.noise.c12));
            prop_assert_eq!(two.noise.v3, one.noise.v3);
        }

        #[test]
        fn rotation_preserves_polarization_degree_and_trace(s in state_strategy(), phi in -1.5f64..1.5) {
            let r = rotate_about_s3(&s, phi).unwrap();
            prop_assert!((r.mean.degree_of_polarization() - s.mean.degree_of_polarization()).abs() < 1e-12);
            let (t0, t1) = (s.noise.v1 + s.noise.v2, r.noise.v1 + r.noise.v2);
            prop_assert!((t0 - t1).abs() <= 1e-12 * t0);
            prop_assert_eq!(r.mean.s0, s.mean.s0);
            prop_assert_eq!(r.mean.s3, s.mean.s3);
        }

        #[test]
        fn coherent_input_never_below_snl(s1 in -5.0f64..5.0, var_phi in 0.0f64..1.0) {
            prop_assert!(output_s2_variance(1.0, s1, var_phi).unwrap() >= 1.0);
        }

        #[test]
        fn squeezed_input_sub_poissonian_condition(v2 in 0.05f64..0.99, s1 in -3.0f64..3.0, var_phi in 0.0f64..0.5) {
            let out = output_s2_variance(v2, s1, var_phi).unwrap();
            let excess = s1 * s1 * var_phi;
            if excess < 1.0 - v2 - 1e-12 {
                prop_assert!(out < 1.0);
            } else if excess > 1.0 - v2 + 1e-12 {
                prop_assert!(out > 1.0);
            }
        }
    }
}
