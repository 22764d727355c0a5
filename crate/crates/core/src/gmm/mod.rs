//! Two-dimensional Gaussian mixtures: densities, EM fitting and the
//! per-(group, class, other-group) feature bank that turns a context pair
//! `(r, area_ratio)` into class posteriors.

mod bank;
mod em;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bank::{
    build_feature_bank, class_posteriors, posteriors_from_log_likelihoods, BankDiagnostics, BankKey,
    BankOptions, FittedEntry, GmmFeatureBank,
};
pub use em::{fit_gmm_em, EmOptions, FitDiagnostics};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2D {
    pub mean: Vec2,
    pub cov: Mat2,
}

fn det(c: &Mat2) -> f64 {
    c[0][0] * c[1][1] - c[0][1] * c[1][0]
}

impl Gaussian2D {
    pub fn new(mean: Vec2, cov: Mat2) -> Result<Self> {
        let g = Self { mean, cov };
        g.check()?;
        Ok(g)
    }

    pub fn isotropic(mean: Vec2, var: f64) -> Result<Self> {
        Self::new(mean, [[var, 0.0], [0.0, var]])
    }

    /// SPD check for a 2x2 matrix: symmetric, positive determinant and trace.
    pub fn check(&self) -> Result<()> {
        let c = &self.cov;
        let d = det(c);
        let sym_tol = 1e-12 * (c[0][1].abs() + c[1][0].abs()).max(f64::MIN_POSITIVE);
        if (c[0][1] - c[1][0]).abs() > sym_tol {
            return Err(Error::Data(format!("covariance is not symmetric: {c:?}")));
        }
        if !(d > 0.0 && c[0][0] + c[1][1] > 0.0) || !d.is_finite() {
            return Err(Error::DegenerateCovariance { det: d });
        }
        if !self.mean.iter().all(|m| m.is_finite()) {
            return Err(Error::Data("non-finite mean".into()));
        }
        Ok(())
    }

    /// Log-density. Assumes a validated covariance.
    pub fn ln_pdf(&self, x: Vec2) -> f64 {
        let c = &self.cov;
        let d = det(c);
        let dx = x[0] - self.mean[0];
        let dy = x[1] - self.mean[1];
        let q = (dx * dx * c[1][1] - dx * dy * (c[0][1] + c[1][0]) + dy * dy * c[0][0]) / d;
        -LN_2PI - 0.5 * d.ln() - 0.5 * q
    }
}

/// Bivariate normal density `(2π)^-1 |Σ|^-1/2 exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`.
pub fn gaussian_pdf(x: Vec2, g: &Gaussian2D) -> Result<f64> {
    g.check()?;
    Ok(g.ln_pdf(x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(rename = "w")]
    pub weight: f64,
    pub mean: Vec2,
    pub cov: Mat2,
}

impl Component {
    pub fn gaussian(&self) -> Gaussian2D {
        Gaussian2D { mean: self.mean, cov: self.cov }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmRepr", into = "GmmRepr")]
pub struct Gmm2D {
    components: Vec<Component>,
}

#[derive(Serialize, Deserialize)]
struct GmmRepr {
    components: Vec<Component>,
}

impl TryFrom<GmmRepr> for Gmm2D {
    type Error = Error;

    fn try_from(r: GmmRepr) -> Result<Self> {
        Gmm2D::new(r.components)
    }
}

impl From<Gmm2D> for GmmRepr {
    fn from(m: Gmm2D) -> Self {
        GmmRepr { components: m.components }
    }
}

impl Gmm2D {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::Data(format!("mixture weight {} outside (0, 1]", c.weight)));
            }
            c.gaussian().check()?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Data(format!("mixture weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn single(g: Gaussian2D) -> Self {
        Self { components: vec![Component { weight: 1.0, mean: g.mean, cov: g.cov }] }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// `ln Σ_k φ_k N(x | μ_k, Σ_k)`, computed with log-sum-exp.
    pub fn ln_pdf(&self, x: Vec2) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.weight.ln() + c.gaussian().ln_pdf(x)))
    }
}

pub fn gmm_pdf(x: Vec2, m: &Gmm2D) -> Result<f64> {
    let mut total = 0.0;
    for c in m.components() {
        total += c.weight * gaussian_pdf(x, &c.gaussian())?;
    }
    Ok(total)
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use approx::assert_relative_eq;

    #[test]
    fn pdf_examples() {
        let i = Gaussian2D::isotropic([0.3, -1.0], 1.0).unwrap();
        assert_relative_eq!(gaussian_pdf([0.3, -1.0], &i).unwrap(), 1.0 / (2.0 * PI), max_relative = 1e-12);
        let d = Gaussian2D::new([0.0, 0.0], [[4.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_relative_eq!(gaussian_pdf([0.0, 0.0], &d).unwrap(), 1.0 / (4.0 * PI), max_relative = 1e-12);
        assert_relative_eq!(
            gaussian_pdf([1.3, -1.0], &i).unwrap(),
            (-0.5f64).exp() / (2.0 * PI),
            max_relative = 1e-12
        );
    }

    #[test]
    fn singular_covariance_is_rejected() {
        assert!(matches!(
            Gaussian2D::new([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]]),
            Err(Error::DegenerateCovariance { .. })
        ));
        let bad = Gaussian2D { mean: [0.0, 0.0], cov: [[0.0, 0.0], [0.0, 0.0]] };
        assert!(matches!(gaussian_pdf([0.0, 0.0], &bad), Err(Error::DegenerateCovariance { .. })));
        let asym = Gaussian2D { mean: [0.0, 0.0], cov: [[1.0, 0.5], [0.2, 1.0]] };
        assert!(asym.check().is_err());
    }

    #[test]
    fn mixture_examples() {
        let g = Gaussian2D::new([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]]).unwrap();
        let x = [0.4, 2.5];
        let one = Gmm2D::single(g.clone());
        assert_eq!(gmm_pdf(x, &one).unwrap(), gaussian_pdf(x, &g).unwrap());

        let two = Gmm2D::new(vec![
            Component { weight: 0.3, mean: g.mean, cov: g.cov },
            Component { weight: 0.7, mean: g.mean, cov: g.cov },
        ])
        .unwrap();
        assert_relative_eq!(gmm_pdf(x, &two).unwrap(), gaussian_pdf(x, &g).unwrap(), max_relative = 1e-14);

        let far = Gmm2D::new(vec![
            Component { weight: 0.5, mean: [0.0, 0.0], cov: [[1.0, 0.0], [0.0, 1.0]] },
            Component { weight: 0.5, mean: [10.0, 10.0], cov: [[1.0, 0.0], [0.0, 1.0]] },
        ])
        .unwrap();
        let expected = 0.5 / (2.0 * PI) + 0.5 * (-100.0f64).exp() / (2.0 * PI);
        assert_relative_eq!(gmm_pdf([0.0, 0.0], &far).unwrap(), expected, max_relative = 1e-12);
        assert_relative_eq!(far.ln_pdf([0.0, 0.0]).exp(), expected, max_relative = 1e-12);
    }

    #[test]
    fn weights_must_normalize() {
        let c = |w| Component { weight: w, mean: [0.0, 0.0], cov: [[1.0, 0.0], [0.0, 1.0]] };
        assert!(Gmm2D::new(vec![c(0.5), c(0.4)]).is_err());
        assert!(Gmm2D::new(vec![]).is_err());
        assert!(Gmm2D::new(vec![c(0.5), c(0.5)]).is_ok());
    }

    #[test]
    fn serde_shape() {
        let m = Gmm2D::single(Gaussian2D::isotropic([1.0, 2.0], 0.5).unwrap());
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["components"][0]["w"], 1.0);
        assert_eq!(v["components"][0]["cov"][1][1], 0.5);
        let back: Gmm2D = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
