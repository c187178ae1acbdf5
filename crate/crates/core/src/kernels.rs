//! Compactly supported smoothing kernels and their integral constants.
//!
//! Two families are available:
//!
//! - [`KernelFamily::PaperRadial`]: `(3/pi) * max(0, 1 - |u|^2)^2`, divided by
//!   the normalizer `Z_d` so that it integrates to one in any dimension. The
//!   raw form is already normalized in two dimensions (`Z_2 = 1`).
//! - [`KernelFamily::ProductBiweight`]: `prod_i (15/16) (1 - u_i^2)^2` on the
//!   unit box.
//!
//! The jackknife kernel `K_lambda(u) = (lambda K(u) - lambda^{-d/2} K(u / sqrt(lambda))) / (lambda - 1)`
//! integrates to one and has vanishing second moments. Its squared integral
//! `phi_{K_lambda}` sets the width of the bias-corrected confidence interval.
//!
//! All constants come from Gauss-Legendre quadrature on the pieces where the
//! integrands are polynomial, so the rules are exact up to rounding.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

const QUADRATURE_NODES: usize = 64;
const RADIAL_CONSTANT: f64 = 3.0 / PI;
const BIWEIGHT_CONSTANT: f64 = 15.0 / 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    PaperRadial,
    ProductBiweight,
}

impl KernelFamily {
    /// Radial form for one or two smooth dimensions, product form above.
    pub fn default_for(dimension: usize) -> KernelFamily {
        if dimension <= 2 {
            KernelFamily::PaperRadial
        } else {
            KernelFamily::ProductBiweight
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_radial" | "radial" => Ok(KernelFamily::PaperRadial),
            "product_biweight" | "biweight" => Ok(KernelFamily::ProductBiweight),
            other => Err(Error::Configuration(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// Integral constants of a normalized kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `Z_d`: integral of the raw kernel.
    pub normalizer: f64,
    /// `phi_K`: integral of `K^2`.
    pub phi: f64,
    /// `psi_K`: integral of `u_1^2 K(u)`.
    pub psi: f64,
}

/// A kernel family in a fixed dimension with its precomputed constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    dimension: usize,
    constants: KernelConstants,
    lambda: f64,
    phi_jackknife: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dimension: usize) -> Result<Self> {
        Self::with_lambda(family, dimension, 2.0)
    }

    pub fn with_lambda(family: KernelFamily, dimension: usize, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "jackknife factor must exceed 1, got {lambda}"
            )));
        }
        let constants = kernel_constants(family, dimension)?;
        let mut spec = KernelSpec {
            family,
            dimension,
            constants,
            lambda,
            phi_jackknife: f64::NAN,
        };
        spec.phi_jackknife = spec.jackknife_phi();
        Ok(spec)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn constants(&self) -> KernelConstants {
        self.constants
    }

    pub fn normalizer(&self) -> f64 {
        self.constants.normalizer
    }

    pub fn phi(&self) -> f64 {
        self.constants.phi
    }

    pub fn psi(&self) -> f64 {
        self.constants.psi
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `phi_{K_lambda}`, the squared integral of the jackknife kernel.
    pub fn phi_jackknife(&self) -> f64 {
        self.phi_jackknife
    }

    /// Kernel value before division by `Z_d`.
    pub fn eval_raw(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dimension);
        match self.family {
            KernelFamily::PaperRadial => {
                let r2: f64 = u.iter().map(|v| v * v).sum();
                radial_profile(r2)
            }
            KernelFamily::ProductBiweight => u.iter().map(|&v| biweight(v)).product(),
        }
    }

    /// Normalized kernel `K(u)`.
    #[inline]
    pub fn eval(&self, u: &[f64]) -> f64 {
        self.eval_raw(u) / self.constants.normalizer
    }

    /// Jackknife kernel `K_lambda(u)`; may be negative.
    pub fn eval_jackknife(&self, u: &[f64]) -> f64 {
        let s = self.lambda.sqrt();
        let scaled: Vec<f64> = u.iter().map(|v| v / s).collect();
        let lam = self.lambda;
        (lam * self.eval(u) - lam.powf(-(self.dimension as f64) / 2.0) * self.eval(&scaled))
            / (lam - 1.0)
    }

    /// Radius beyond which `K` vanishes (Euclidean for the radial family,
    /// sup-norm for the product family).
    pub fn support_radius(&self) -> f64 {
        1.0
    }

    fn jackknife_phi(&self) -> f64 {
        let gl = GaussLegendre::new(QUADRATURE_NODES);
        let lam = self.lambda;
        let s = lam.sqrt();
        let d = self.dimension as i32;
        let z = self.constants.normalizer;
        match self.family {
            KernelFamily::PaperRadial => {
                let area = sphere_area(self.dimension);
                let k = |r: f64| radial_profile(r * r) / z;
                let kl = |r: f64| {
                    (lam * k(r) - lam.powf(-(d as f64) / 2.0) * k(r / s)) / (lam - 1.0)
                };
                area * gl.integrate_pieces(0.0, s, &[1.0], |r| {
                    let v = kl(r);
                    v * v * r.powi(d - 1)
                })
            }
            KernelFamily::ProductBiweight => {
                // Expand (lam K(u) - lam^{-d/2} K(u/s))^2; every term factorizes.
                let norm1 = gl.integrate(-1.0, 1.0, biweight);
                let a1 = gl.integrate(-1.0, 1.0, |v| biweight(v).powi(2)) / (norm1 * norm1);
                let b1 =
                    gl.integrate(-1.0, 1.0, |v| biweight(v) * biweight(v / s)) / (norm1 * norm1);
                let a = a1.powi(d);
                let b = b1.powi(d);
                let c = lam.powf(d as f64 / 2.0) * a;
                let m = lam.powf(-(d as f64) / 2.0);
                (lam * lam * a - 2.0 * lam * m * b + m * m * c) / ((lam - 1.0) * (lam - 1.0))
            }
        }
    }
}

#[inline]
fn radial_profile(r2: f64) -> f64 {
    let t = 1.0 - r2;
    if t > 0.0 {
        RADIAL_CONSTANT * t * t
    } else {
        0.0
    }
}

#[inline]
fn biweight(v: f64) -> f64 {
    let t = 1.0 - v * v;
    if t > 0.0 {
        BIWEIGHT_CONSTANT * t * t
    } else {
        0.0
    }
}

/// Surface area of the unit sphere in `R^d`, `2 pi^{d/2} / Gamma(d/2)`.
fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / half_integer_gamma(d)
}

/// `Gamma(d / 2)` for positive integer `d`.
fn half_integer_gamma(d: usize) -> f64 {
    let (mut g, mut x) = if d.is_multiple_of(2) { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while x < d as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Normalizer, `phi_K` and `psi_K` of the normalized kernel.
pub fn kernel_constants(family: KernelFamily, dimension: usize) -> Result<KernelConstants> {
    if dimension == 0 {
        return Err(Error::Configuration(format!(
            "{family:?} kernel needs at least one smooth dimension"
        )));
    }
    let gl = GaussLegendre::new(QUADRATURE_NODES);
    let d = dimension as i32;
    Ok(match family {
        KernelFamily::PaperRadial => {
            let area = sphere_area(dimension);
            let z = area * gl.integrate(0.0, 1.0, |r| radial_profile(r * r) * r.powi(d - 1));
            let phi = area
                * gl.integrate(0.0, 1.0, |r| (radial_profile(r * r) / z).powi(2) * r.powi(d - 1));
            let psi = area / dimension as f64
                * gl.integrate(0.0, 1.0, |r| r * r * radial_profile(r * r) / z * r.powi(d - 1));
            KernelConstants {
                normalizer: z,
                phi,
                psi,
            }
        }
        KernelFamily::ProductBiweight => {
            let z1 = gl.integrate(-1.0, 1.0, biweight);
            let phi1 = gl.integrate(-1.0, 1.0, |v| biweight(v).powi(2)) / (z1 * z1);
            let psi = gl.integrate(-1.0, 1.0, |v| v * v * biweight(v)) / z1;
            KernelConstants {
                normalizer: z1.powi(d),
                phi: phi1.powi(d),
                psi,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    // Closed forms via Beta functions:
    //   int_0^1 (1 - r^2)^p r^q dr = B((q + 1) / 2, p + 1) / 2
    fn beta_half(p: f64, q: f64) -> f64 {
        let a = (q + 1.0) / 2.0;
        let b = p + 1.0;
        gamma(a) * gamma(b) / gamma(a + b) / 2.0
    }

    fn area_oracle(d: usize) -> f64 {
        2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
    }

    fn radial_oracle(d: usize) -> KernelConstants {
        let q = d as f64 - 1.0;
        let z = area_oracle(d) * RADIAL_CONSTANT * beta_half(2.0, q);
        let phi = area_oracle(d) * RADIAL_CONSTANT.powi(2) * beta_half(4.0, q) / (z * z);
        let psi = area_oracle(d) / d as f64 * RADIAL_CONSTANT * beta_half(2.0, q + 2.0) / z;
        KernelConstants {
            normalizer: z,
            phi,
            psi,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn raw_radial_value_at_origin() {
        let k = KernelSpec::new(KernelFamily::PaperRadial, 2).unwrap();
        assert!((k.eval_raw(&[0.0, 0.0]) - 0.954_929_658_551_372).abs() < 1e-12);
        assert!((k.normalizer() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishes_on_support_boundary() {
        let radial = KernelSpec::new(KernelFamily::PaperRadial, 2).unwrap();
        for i in 0..16 {
            let a = i as f64 * 0.4;
            // cos^2 + sin^2 can round just below 1
            assert!(radial.eval(&[a.cos(), a.sin()]) < 1e-28);
        }
        let product = KernelSpec::new(KernelFamily::ProductBiweight, 2).unwrap();
        assert_eq!(product.eval(&[1.0, 0.3]), 0.0);
        assert_eq!(product.eval(&[0.0, -1.0]), 0.0);
        let k1 = KernelSpec::new(KernelFamily::PaperRadial, 1).unwrap();
        assert_eq!(k1.eval(&[1.0]), 0.0);
        assert_eq!(k1.eval(&[-1.5]), 0.0);
    }

    #[test]
    fn one_dimensional_biweight_constants() {
        let c = kernel_constants(KernelFamily::ProductBiweight, 1).unwrap();
        assert!(rel(c.normalizer, 1.0) < 1e-12);
        assert!(rel(c.phi, 5.0 / 7.0) < 1e-12);
        assert!(rel(c.psi, 1.0 / 7.0) < 1e-12);
    }

    #[test]
    fn radial_constants_match_beta_oracle() {
        let c1 = kernel_constants(KernelFamily::PaperRadial, 1).unwrap();
        assert!(rel(c1.normalizer, 16.0 / (5.0 * PI)) < 1e-10);
        for d in 1..=5 {
            let c = kernel_constants(KernelFamily::PaperRadial, d).unwrap();
            let o = radial_oracle(d);
            assert!(rel(c.normalizer, o.normalizer) < 1e-8, "d={d}");
            assert!(rel(c.phi, o.phi) < 1e-8, "d={d}");
            assert!(rel(c.psi, o.psi) < 1e-8, "d={d}");
        }
    }

    #[test]
    fn product_constants_factorize() {
        for d in 1..=4 {
            let c = kernel_constants(KernelFamily::ProductBiweight, d).unwrap();
            assert!(rel(c.phi, (5.0f64 / 7.0).powi(d as i32)) < 1e-12);
            assert!(rel(c.psi, 1.0 / 7.0) < 1e-12);
        }
    }

    #[test]
    fn zero_dimension_is_a_configuration_error() {
        assert!(matches!(
            kernel_constants(KernelFamily::PaperRadial, 0),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn jackknife_identity_at_lambda_two() {
        for family in [KernelFamily::PaperRadial, KernelFamily::ProductBiweight] {
            let k = KernelSpec::new(family, 1).unwrap();
            for i in -30..=30 {
                let u = i as f64 * 0.05;
                let expected = 2.0 * k.eval(&[u]) - 2f64.powf(-0.5) * k.eval(&[u / 2f64.sqrt()]);
                assert!((k.eval_jackknife(&[u]) - expected).abs() < 1e-14);
            }
        }
    }

    // Composite Simpson over the jackknife support, an independent rule.
    fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn jackknife_moments_in_one_dimension() {
        for family in [KernelFamily::PaperRadial, KernelFamily::ProductBiweight] {
            for lambda in [1.5, 2.0, 4.0] {
                let k = KernelSpec::with_lambda(family, 1, lambda).unwrap();
                let s = lambda.sqrt();
                // split at the kink points +-1 so each panel is polynomial
                let pieces = [(-s, -1.0), (-1.0, 1.0), (1.0, s)];
                let integral = |f: &dyn Fn(f64) -> f64| -> f64 {
                    pieces.iter().map(|&(a, b)| simpson(a, b, 2000, f)).sum()
                };
                let mass = integral(&|u| k.eval_jackknife(&[u]));
                let second = integral(&|u| u * u * k.eval_jackknife(&[u]));
                let phi = integral(&|u| k.eval_jackknife(&[u]).powi(2));
                assert!((mass - 1.0).abs() < 1e-8, "{family:?} {lambda}: {mass}");
                assert!(second.abs() < 1e-8, "{family:?} {lambda}: {second}");
                assert!(rel(k.phi_jackknife(), phi) < 1e-8, "{family:?} {lambda}");
            }
        }
    }

    #[test]
    fn jackknife_phi_closed_form_in_one_dimension() {
        // exact symbolic value of int K_2(u)^2 du; the normalized radial
        // kernel coincides with the biweight in one dimension
        let expected = 20.0 / 7.0 - 285.0 * 2f64.sqrt() / 224.0;
        for family in [KernelFamily::PaperRadial, KernelFamily::ProductBiweight] {
            let k = KernelSpec::new(family, 1).unwrap();
            assert!(rel(k.phi_jackknife(), expected) < 1e-10, "{family:?}");
        }
    }

    #[test]
    fn radial_two_dimensional_jackknife_mass() {
        // Polar integration with an independent rule.
        let k = KernelSpec::new(KernelFamily::PaperRadial, 2).unwrap();
        let s = 2f64.sqrt();
        let f = |r: f64| 2.0 * PI * r * k.eval_jackknife(&[r, 0.0]);
        let mass = simpson(0.0, 1.0, 2000, f) + simpson(1.0, s, 2000, f);
        let second = simpson(0.0, 1.0, 2000, |r| 0.5 * r * r * f(r))
            + simpson(1.0, s, 2000, |r| 0.5 * r * r * f(r));
        assert!((mass - 1.0).abs() < 1e-8);
        assert!(second.abs() < 1e-8);
    }

    #[test]
    fn symmetric_in_sign() {
        let k = KernelSpec::new(KernelFamily::ProductBiweight, 3).unwrap();
        let u = [0.2, -0.7, 0.4];
        let m = [-0.2, 0.7, -0.4];
        assert_eq!(k.eval(&u), k.eval(&m));
        assert_eq!(k.eval_jackknife(&u), k.eval_jackknife(&m));
    }

    #[test]
    fn rejects_lambda_at_most_one() {
        assert!(KernelSpec::with_lambda(KernelFamily::PaperRadial, 1, 1.0).is_err());
    }
}
