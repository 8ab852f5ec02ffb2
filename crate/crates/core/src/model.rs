//! Model constants and pointwise constitutive laws.

use log::warn;

use crate::error::{Error, Result};
use crate::mesh::Control;

/// Physical and regularization constants of the phase-field model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Fracture toughness.
    pub g_c: f64,
    /// Phase-field regularization length.
    pub eps: f64,
    /// Residual stiffness in the degradation function.
    pub kappa: f64,
    /// Irreversibility penalty weight.
    pub gamma: f64,
    /// Viscous (convexification) weight.
    pub eta: f64,
    /// Weight of the displacement initial condition.
    pub eta0: f64,
    /// Lamé parameters.
    pub mu: f64,
    pub lambda: f64,
}

impl ModelParams {
    /// Builds parameters from Young's modulus and Poisson's ratio (plane strain).
    #[allow(clippy::too_many_arguments)]
    pub fn from_engineering(
        g_c: f64,
        eps: f64,
        kappa: f64,
        gamma: f64,
        eta: f64,
        eta0: f64,
        young: f64,
        poisson: f64,
    ) -> Result<Self> {
        let (mu, lambda) = lame_from_engineering(young, poisson)?;
        let params = ModelParams {
            g_c,
            eps,
            kappa,
            gamma,
            eta,
            eta0,
            mu,
            lambda,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks the hard invariants and warns about weak parameter separation.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("g_c", self.g_c),
            ("eps", self.eps),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("eta0", self.eta0),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {value}")));
            }
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::invalid("kappa", format!("must lie in (0, 1), got {}", self.kappa)));
        }
        if !(self.mu > 0.0 && self.lambda >= 0.0) {
            return Err(Error::invalid(
                "mu/lambda",
                format!("need mu > 0 and lambda >= 0, got ({}, {})", self.mu, self.lambda),
            ));
        }
        if self.gamma / self.eta < 10.0 {
            warn!(
                "gamma/eta = {:.3e} < 10: the viscous term competes with the irreversibility penalty",
                self.gamma / self.eta
            );
        }
        if self.eta / self.eta0 < 10.0 {
            warn!("eta/eta0 = {:.3e} < 10", self.eta / self.eta0);
        }
        Ok(())
    }
}

/// Tracking target, nominal control and Tikhonov weight.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    pub alpha: f64,
    /// Desired phase-field, one value per mesh node.
    pub phi_d: Vec<f64>,
    /// Nominal control on the Neumann boundary.
    pub q_d: Control,
}

impl CostParams {
    pub fn new(alpha: f64, phi_d: Vec<f64>, q_d: Control) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
        }
        if let Some(bad) = phi_d.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("phi_d", format!("values must lie in [0, 1], found {bad}")));
        }
        Ok(CostParams { alpha, phi_d, q_d })
    }
}

/// Plane-strain Lamé parameters `(mu, lambda)` from `E` and `nu`.
pub fn lame_from_engineering(young: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(young > 0.0) {
        return Err(Error::invalid("E", format!("must be positive, got {young}")));
    }
    if !(0.0..0.5).contains(&poisson) {
        return Err(Error::invalid("nu", format!("must lie in [0, 0.5), got {poisson}")));
    }
    let mu = young / (2.0 * (1.0 + poisson));
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    Ok((mu, lambda))
}

/// Degradation function `(1-kappa) phi^2 + kappa`.
#[inline]
pub fn degradation(phi: f64, kappa: f64) -> f64 {
    (1.0 - kappa) * phi * phi + kappa
}

#[inline]
pub fn degradation_derivative(phi: f64, kappa: f64) -> f64 {
    2.0 * (1.0 - kappa) * phi
}

/// Symmetric 2x2 tensor stored as `(xx, yy, xy)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        yy: 0.0,
        xy: 0.0,
    };

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Sym2 { xx, yy, xy }
    }

    /// Symmetric part of a displacement gradient `[[dux/dx, dux/dy], [duy/dx, duy/dy]]`.
    #[inline]
    pub fn sym_grad(grad: [[f64; 2]; 2]) -> Self {
        Sym2 {
            xx: grad[0][0],
            yy: grad[1][1],
            xy: 0.5 * (grad[0][1] + grad[1][0]),
        }
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Double contraction `A : B`.
    #[inline]
    pub fn ddot(&self, other: &Sym2) -> f64 {
        self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2 {
            xx: s * self.xx,
            yy: s * self.yy,
            xy: s * self.xy,
        }
    }

    #[inline]
    pub fn add(&self, other: &Sym2) -> Sym2 {
        Sym2 {
            xx: self.xx + other.xx,
            yy: self.yy + other.yy,
            xy: self.xy + other.xy,
        }
    }
}

/// Isotropic linear elastic stress `2 mu e + lambda tr(e) I`.
#[inline]
pub fn stress(e: &Sym2, mu: f64, lambda: f64) -> Sym2 {
    let tr = lambda * e.trace();
    Sym2 {
        xx: 2.0 * mu * e.xx + tr,
        yy: 2.0 * mu * e.yy + tr,
        xy: 2.0 * mu * e.xy,
    }
}

/// 1 where the phase-field grew between two time points (strict), else 0.
#[inline]
pub fn active_indicator(phi_curr: f64, phi_prev: f64) -> f64 {
    if phi_curr > phi_prev {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn lame_conversion_examples() {
        let (mu, lambda) = lame_from_engineering(1e6, 0.2).unwrap();
        // 1e6 / 2.4 and 2e5 / 0.72
        assert_relative_eq!(mu, 416_666.666_666_666_7, max_relative = 1e-14);
        assert_relative_eq!(lambda, 277_777.777_777_777_8, max_relative = 1e-14);
        assert_eq!(lame_from_engineering(1.0, 0.0).unwrap(), (0.5, 0.0));
        let (mu, lambda) = lame_from_engineering(1.0, 0.25).unwrap();
        assert_relative_eq!(mu, 0.4, max_relative = 1e-15);
        assert_relative_eq!(lambda, 0.4, max_relative = 1e-15);
    }

    #[test]
    fn lame_rejects_incompressible() {
        assert!(matches!(
            lame_from_engineering(1.0, 0.5),
            Err(Error::InvalidParameter { name: "nu", .. })
        ));
        assert!(lame_from_engineering(-1.0, 0.2).is_err());
    }

    #[test]
    fn degradation_examples() {
        assert_eq!(degradation(1.0, 0.3), 1.0);
        assert_eq!(degradation(0.0, 1e-10), 1e-10);
        assert_eq!(degradation(0.5, 0.0), 0.25);
        assert_eq!(degradation_derivative(0.5, 0.0), 1.0);
    }

    #[test]
    fn stress_examples() {
        assert_eq!(stress(&Sym2::ZERO, 3.0, 4.0), Sym2::ZERO);
        assert_eq!(stress(&Sym2::new(1.0, 1.0, 0.0), 1.0, 1.0), Sym2::new(4.0, 4.0, 0.0));
        assert_eq!(stress(&Sym2::new(0.0, 0.0, 0.5), 1.0, 7.0), Sym2::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn indicator_is_strict() {
        assert_eq!(active_indicator(0.5, 0.5), 0.0);
        assert_eq!(active_indicator(0.6, 0.5), 1.0);
        assert_eq!(active_indicator(0.4, 0.5), 0.0);
    }

    #[test]
    fn validation_catches_bad_kappa() {
        let mut p = ModelParams::from_engineering(1.0, 0.1, 1e-10, 1e5, 1e3, 1.0, 1e6, 0.2).unwrap();
        p.kappa = 0.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn degradation_monotone_and_bounded(a in 0.0f64..10.0, b in 0.0f64..10.0, kappa in 1e-12f64..0.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(degradation(lo, kappa) <= degradation(hi, kappa));
            prop_assert!(degradation(lo, kappa) >= kappa);
        }

        #[test]
        fn stress_is_linear(
            e1 in proptest::array::uniform3(-1.0f64..1.0),
            e2 in proptest::array::uniform3(-1.0f64..1.0),
            a in -3.0f64..3.0, b in -3.0f64..3.0,
        ) {
            let (mu, lambda) = (0.7, 1.3);
            let s1 = Sym2::new(e1[0], e1[1], e1[2]);
            let s2 = Sym2::new(e2[0], e2[1], e2[2]);
            let lhs = stress(&s1.scale(a).add(&s2.scale(b)), mu, lambda);
            let rhs = stress(&s1, mu, lambda).scale(a).add(&stress(&s2, mu, lambda).scale(b));
            prop_assert!((lhs.xx - rhs.xx).abs() < 1e-13);
            prop_assert!((lhs.yy - rhs.yy).abs() < 1e-13);
            prop_assert!((lhs.xy - rhs.xy).abs() < 1e-13);
        }

        #[test]
        fn indicator_mutually_exclusive(x in -2.0f64..2.0, y in -2.0f64..2.0) {
            prop_assume!(x != y);
            prop_assert_eq!(active_indicator(x, y) * active_indicator(y, x), 0.0);
        }
    }
}
