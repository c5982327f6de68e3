//! The trivial Lipschitz bound (product of per-layer spectral norms) and gap reports.
//!
//! Bias vectors never enter a bound: the difference of two affine maps with the same bias is
//! linear. ReLU and Identity contribute a factor of one. A LogSoftmax layer is left out of the
//! product and listed in [`BoundReport::logsoftmax_excluded`], so the bound certifies the map
//! up to the logits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::{conv_spectrum_fft, ConvOperator};
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_operator, spectral_norm_power, PowerIterConfig, SpectralEstimate};
use crate::network::{ActivationKind, Layer, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Dense,
    ConvToeplitz,
    ConvFft,
    Activation,
}

/// How convolution layers get their norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMethod {
    /// Power iteration on the exact zero-padded operator.
    #[default]
    Toeplitz,
    /// Largest per-frequency singular value of the circular operator; stride 1 only.
    Fft,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    #[serde(rename = "index")]
    pub layer_index: usize,
    pub kind: NormKind,
    #[serde(flatten)]
    pub sigma: SpectralEstimate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundConfig {
    pub conv_method: ConvMethod,
    pub power: PowerIterConfig,
    /// Return a report even when some power iteration did not converge.
    pub force: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub per_layer: Vec<LayerNorm>,
    pub trivial: f64,
    pub tight_external: Option<f64>,
    pub empirical_max: Option<f64>,
    pub gap_trivial_over_emp: Option<f64>,
    pub gap_tight_over_emp: Option<f64>,
    #[serde(default)]
    pub logsoftmax_excluded: Vec<usize>,
}

/// Ratios of the upper bounds over the empirical maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaps {
    pub trivial_over_emp: f64,
    pub tight_over_emp: Option<f64>,
}

pub fn trivial_bound(net: &Network, cfg: &BoundConfig) -> Result<BoundReport> {
    let computed: Vec<Option<LayerNorm>> = net
        .layers()
        .par_iter()
        .enumerate()
        .map(|(index, layer)| layer_norm(net, index, layer, cfg))
        .collect::<Result<_>>()?;

    let mut per_layer = Vec::new();
    let mut logsoftmax_excluded = Vec::new();
    for (index, entry) in computed.into_iter().enumerate() {
        match entry {
            Some(norm) => {
                if !norm.sigma.converged && !cfg.force {
                    return Err(Error::NotConverged {
                        layer: index,
                        iterations: norm.sigma.iterations,
                        residual: norm.sigma.residual,
                    });
                }
                per_layer.push(norm);
            }
            None => logsoftmax_excluded.push(index),
        }
    }
    let trivial = per_layer.iter().map(|l| l.sigma.sigma_max).product();
    Ok(BoundReport {
        per_layer,
        trivial,
        tight_external: None,
        empirical_max: None,
        gap_trivial_over_emp: None,
        gap_tight_over_emp: None,
        logsoftmax_excluded,
    })
}

fn layer_norm(
    net: &Network,
    index: usize,
    layer: &Layer,
    cfg: &BoundConfig,
) -> Result<Option<LayerNorm>> {
    let power = PowerIterConfig {
        seed: cfg.power.seed.wrapping_add(index as u64),
        ..cfg.power
    };
    let (kind, sigma) = match layer {
        Layer::Dense(d) => (NormKind::Dense, spectral_norm_power(d.weights(), &power)?),
        Layer::Conv(c) => match cfg.conv_method {
            ConvMethod::Toeplitz => {
                let op = ConvOperator::new(c, net.layer_input_dims(index))?;
                (NormKind::ConvToeplitz, spectral_norm_operator(&op, &power)?)
            }
            ConvMethod::Fft => {
                let spectrum = conv_spectrum_fft(c, net.layer_input_dims(index)).map_err(
                    |e| match e {
                        Error::Unsupported(m) => Error::Unsupported(format!("layer {index}: {m}")),
                        other => other,
                    },
                )?;
                (NormKind::ConvFft, SpectralEstimate::exact(spectrum.sigma_max))
            }
        },
        Layer::Activation(ActivationKind::LogSoftmax) => return Ok(None),
        Layer::Activation(ActivationKind::Relu | ActivationKind::Identity) => {
            (NormKind::Activation, SpectralEstimate::exact(1.0))
        }
    };
    Ok(Some(LayerNorm {
        layer_index: index,
        kind,
        sigma,
    }))
}

pub fn gap_report(trivial: f64, tight: Option<f64>, empirical_max: f64) -> Result<Gaps> {
    if !(empirical_max > 0.0) || !empirical_max.is_finite() {
        return Err(Error::Domain(format!(
            "empirical maximum must be positive and finite, got {empirical_max}"
        )));
    }
    if !(trivial >= 0.0) || !trivial.is_finite() {
        return Err(Error::Domain(format!(
            "trivial bound must be non-negative and finite, got {trivial}"
        )));
    }
    if let Some(t) = tight {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!(
                "tight bound must be non-negative and finite, got {t}"
            )));
        }
    }
    Ok(Gaps {
        trivial_over_emp: trivial / empirical_max,
        tight_over_emp: tight.map(|t| t / empirical_max),
    })
}

impl BoundReport {
    /// Attaches external/empirical values and the gaps they make computable.
    pub fn with_comparisons(mut self, tight: Option<f64>, empirical_max: Option<f64>) -> Result<Self> {
        self.tight_external = tight;
        self.empirical_max = empirical_max;
        self.gap_trivial_over_emp = None;
        self.gap_tight_over_emp = None;
        if let Some(emp) = empirical_max {
            let gaps = gap_report(self.trivial, tight, emp)?;
            self.gap_trivial_over_emp = Some(gaps.trivial_over_emp);
            self.gap_tight_over_emp = gaps.tight_over_emp;
        } else if let Some(t) = tight {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::Domain(format!(
                    "tight bound must be non-negative and finite, got {t}"
                )));
            }
        }
        Ok(self)
    }

    pub fn all_converged(&self) -> bool {
        self.per_layer.iter().all(|l| l.sigma.converged)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialisation cannot fail");
        s.push('\n');
        s
    }

    /// Human-readable summary with gaps to two decimals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.per_layer {
            out.push_str(&format!(
                "layer {:>3} {:<13} sigma_max = {:.6}{}\n",
                l.layer_index,
                serde_json::to_value(l.kind)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default(),
                l.sigma.sigma_max,
                if l.sigma.converged { "" } else { "  (not converged)" }
            ));
        }
        for i in &self.logsoftmax_excluded {
            out.push_str(&format!("layer {i:>3} {:<13} excluded from the product\n", "logsoftmax"));
        }
        out.push_str(&format!("trivial bound: {:.3}\n", self.trivial));
        if let Some(t) = self.tight_external {
            out.push_str(&format!("tight bound (external): {t:.3}\n"));
        }
        if let Some(e) = self.empirical_max {
            out.push_str(&format!("empirical max: {e:.3}\n"));
        }
        if let Some(g) = self.gap_trivial_over_emp {
            out.push_str(&format!("trivial / empirical: {g:.2}x\n"));
        }
        if let Some(g) = self.gap_tight_over_emp {
            out.push_str(&format!("tight / empirical: {g:.2}x\n"));
        }
        out
    }
}
