use rand::Rng;
use rand_distr::{Distribution, Normal, Pareto, Poisson};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::event_log::Dataset;

/// Distribution experiment datasets are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generator {
    Gaussian { mean: f64, std_dev: f64 },
    Pareto { alpha: f64, x_min: f64 },
    Poisson { lambda: f64 },
}

impl Generator {
    pub const GAUSSIAN: Generator = Generator::Gaussian { mean: 50.0, std_dev: 10.0 };
    pub const PARETO: Generator = Generator::Pareto { alpha: 2.0, x_min: 1.0 };
    pub const POISSON: Generator = Generator::Poisson { lambda: 4.0 };

    pub fn name(&self) -> &'static str {
        match self {
            Generator::Gaussian { .. } => "gaussian",
            Generator::Pareto { .. } => "pareto",
            Generator::Poisson { .. } => "poisson",
        }
    }

    /// Name with parameters, e.g. `gaussian(50,10)`.
    pub fn label(&self) -> String {
        match self {
            Generator::Gaussian { mean, std_dev } => format!("gaussian({mean},{std_dev})"),
            Generator::Pareto { alpha, x_min } => format!("pareto({alpha},{x_min})"),
            Generator::Poisson { lambda } => format!("poisson({lambda})"),
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::InvalidParameter(msg.into())
}

pub fn generate_dataset<R: Rng + ?Sized>(
    generator: &Generator,
    size: usize,
    rng: &mut R,
) -> Result<Dataset<f64>, HarnessError> {
    if size == 0 {
        return Err(invalid("dataset size must be at least 1"));
    }
    let positive = |x: f64| x.is_finite() && x > 0.0;
    let valid = match *generator {
        Generator::Gaussian { mean, std_dev } => mean.is_finite() && positive(std_dev),
        Generator::Pareto { alpha, x_min } => positive(alpha) && positive(x_min),
        Generator::Poisson { lambda } => positive(lambda),
    };
    if !valid {
        return Err(invalid(format!("{} needs finite, positive parameters", generator.label())));
    }
    let values: Vec<f64> = match *generator {
        Generator::Gaussian { mean, std_dev } => {
            let d = Normal::new(mean, std_dev).map_err(|e| invalid(format!("gaussian: {e}")))?;
            d.sample_iter(rng).take(size).collect()
        }
        Generator::Pareto { alpha, x_min } => {
            let d = Pareto::new(x_min, alpha).map_err(|e| invalid(format!("pareto: {e}")))?;
            d.sample_iter(rng).take(size).collect()
        }
        Generator::Poisson { lambda } => {
            let d = Poisson::new(lambda).map_err(|e| invalid(format!("poisson: {e}")))?;
            d.sample_iter(rng).take(size).collect()
        }
    };
    Ok(Dataset::new(values))
}
