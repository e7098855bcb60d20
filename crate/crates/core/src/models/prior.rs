use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, Gamma, Normal};

use super::{ModelId, SearchBox, ThetaVector};
use crate::{Error, Result};

/// Prior family for a single parameter component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ComponentPrior {
    Normal { mean: f64, sd: f64 },
    TruncatedNormal { mean: f64, sd: f64, lower: f64, upper: f64 },
    /// Shape/rate parameterisation: mean = shape / rate.
    Gamma { shape: f64, rate: f64 },
    /// Beta(shape1, shape2) on `x / scale`, supported on (0, scale).
    ScaledBeta { shape1: f64, shape2: f64, scale: f64 },
}

impl ComponentPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ComponentPrior::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
            ComponentPrior::TruncatedNormal { mean, sd, lower, upper } => {
                mean.is_finite() && sd > 0.0 && lower < upper
            }
            ComponentPrior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            ComponentPrior::ScaledBeta { shape1, shape2, scale } => {
                shape1 > 0.0 && shape2 > 0.0 && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid prior parameters {self:?}")))
        }
    }

    /// Closed support interval (endpoints may carry zero density).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ComponentPrior::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            ComponentPrior::TruncatedNormal { lower, upper, .. } => (lower, upper),
            ComponentPrior::Gamma { .. } => (0.0, f64::INFINITY),
            ComponentPrior::ScaledBeta { scale, .. } => (0.0, scale),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            ComponentPrior::Normal { mean, sd } => Normal::new(mean, sd)
                .map(|d| d.ln_pdf(x))
                .unwrap_or(f64::NEG_INFINITY),
            ComponentPrior::TruncatedNormal { mean, sd, lower, upper } => {
                if x < lower || x > upper {
                    return f64::NEG_INFINITY;
                }
                let Ok(d) = Normal::new(mean, sd) else {
                    return f64::NEG_INFINITY;
                };
                d.ln_pdf(x) - (d.cdf(upper) - d.cdf(lower)).ln()
            }
            ComponentPrior::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                Gamma::new(shape, rate)
                    .map(|d| d.ln_pdf(x))
                    .unwrap_or(f64::NEG_INFINITY)
            }
            ComponentPrior::ScaledBeta { shape1, shape2, scale } => {
                let z = x / scale;
                if z <= 0.0 || z >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                Beta::new(shape1, shape2)
                    .map(|d| d.ln_pdf(z) - scale.ln())
                    .unwrap_or(f64::NEG_INFINITY)
            }
        }
    }
}

/// Independent per-component priors for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    model: ModelId,
    components: Vec<ComponentPrior>,
}

impl PriorSpec {
    pub fn new(model: ModelId, components: Vec<ComponentPrior>) -> Result<Self> {
        if components.len() != model.dim() {
            return Err(Error::Config(format!(
                "{model} prior needs {} components, got {}",
                model.dim(),
                components.len()
            )));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Self { model, components })
    }

    /// mu ~ N(0, 0.2^2), phi ~ TN_(-1,1)(0.9, 0.05^2), sigma_v ~ Gamma(2, 20)
    /// and, for the ASV model, alpha / 2 ~ Beta(20, 2).
    pub fn default_for(model: ModelId) -> Self {
        let mut components = vec![
            ComponentPrior::Normal { mean: 0.0, sd: 0.2 },
            ComponentPrior::TruncatedNormal {
                mean: 0.9,
                sd: 0.05,
                lower: -1.0,
                upper: 1.0,
            },
            ComponentPrior::Gamma { shape: 2.0, rate: 20.0 },
        ];
        if model == ModelId::Asv {
            components.push(ComponentPrior::ScaledBeta {
                shape1: 20.0,
                shape2: 2.0,
                scale: 2.0,
            });
        }
        Self { model, components }
    }

    pub fn model(&self) -> ModelId {
        self.model
    }

    pub fn components(&self) -> &[ComponentPrior] {
        &self.components
    }

    /// Sum of component log-densities at raw values; `-inf` off the support.
    pub fn log_density(&self, values: &[f64]) -> f64 {
        if values.len() != self.components.len() {
            return f64::NEG_INFINITY;
        }
        self.components
            .iter()
            .zip(values)
            .map(|(c, v)| c.ln_pdf(*v))
            .sum()
    }

    pub fn log_prior(&self, theta: &ThetaVector) -> Result<f64> {
        if theta.model() != self.model {
            return Err(Error::Config(format!(
                "prior is for {} but parameter is for {}",
                self.model,
                theta.model()
            )));
        }
        Ok(self.log_density(theta.values()))
    }

    pub fn check_box(&self, search: &SearchBox) -> Result<()> {
        if search.dim() != self.components.len() {
            return Err(Error::Config("search box and prior dimensions differ".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            let (lo, hi) = c.support();
            if search.lower()[i] < lo || search.upper()[i] > hi {
                return Err(Error::Config(format!(
                    "search box for {} is not inside the prior support ({lo}, {hi})",
                    self.model.component_names()[i]
                )));
            }
        }
        Ok(())
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn finite_inside_neg_inf_outside(phi in -3.0f64..3.0, sigma in -1.0f64..2.0) {
            let prior = PriorSpec::default_for(ModelId::Gsv);
            let lp = prior.log_density(&[0.1, phi, sigma]);
            let inside = phi >= -1.0 && phi <= 1.0 && sigma > 0.0;
            prop_assert_eq!(lp.is_finite(), inside);
            if !inside {
                prop_assert_eq!(lp, f64::NEG_INFINITY);
            }
        }
    }
}
