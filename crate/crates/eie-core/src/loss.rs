//! The elastic interaction energy, its exact gradient, and the combined
//! multi-class training loss.
//!
//! For one class the prediction probabilities `sigma` and the one-hot ground
//! truth `G` enter through the combined field `D = alpha * sigma - G`
//! (their level-set functions have opposite orientation, and the additive
//! constant between the two formulations is killed by the zero DC weight).
//! The energy is evaluated spectrally,
//!
//! ```text
//! E(D) = sum_{m,n} sqrt(km^2 + kn^2) * |d_mn|^2,        d = dft_forward(D)
//! ```
//!
//! so it is a positive-semidefinite quadratic form: zero exactly for
//! spatially constant fields, invariant under translation and flips, and
//! `E(cD) = c^2 E(D)`. Its derivative with respect to each pixel is again
//! spectral,
//!
//! ```text
//! dE/dD = (2/(h*w)) * dft_inverse(w_mn * d_mn),
//! ```
//!
//! and the combined loss adds pixel-mean cross-entropy:
//! `L = lambda1 * sum_i E(D_i) + lambda2 * CE`.

use crate::error::{Error, Result};
use crate::field::{Field2D, LabelStack, LogitStack, ProbStack};
use crate::spectral::{dft_forward, dft_inverse, radius_weights, SpectralField};

/// Hyperparameters of the combined loss.
///
/// `alpha` scales the prediction inside the combined field, `lambda1` and
/// `lambda2` weight the energy and cross-entropy terms. The spectral kernel
/// uses unnormalized integer cycles per image (see [`crate::spectral`]); the
/// tag is exposed so run configurations can record it.
#[derive(Debug, Clone, PartialEq)]
pub struct EieConfig {
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl EieConfig {
    pub fn new(alpha: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        let cfg = EieConfig {
            alpha,
            lambda1,
            lambda2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidValue(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0)
            || !(self.lambda2.is_finite() && self.lambda2 >= 0.0)
        {
            return Err(Error::InvalidValue(
                "lambda1 and lambda2 must be nonnegative".into(),
            ));
        }
        if self.lambda1 + self.lambda2 <= 0.0 {
            return Err(Error::InvalidValue(
                "at least one of lambda1, lambda2 must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Frequency convention tag recorded in run outputs.
    pub fn frequency_convention(&self) -> &'static str {
        "integer-cycles"
    }
}

impl Default for EieConfig {
    fn default() -> Self {
        EieConfig {
            alpha: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

/// The single field `D = alpha * sigma - G` whose spectral energy carries
/// both self- and interaction terms for one class.
#[derive(Debug, Clone)]
pub struct CombinedField {
    field: Field2D,
}

impl CombinedField {
    /// Builds `D` from a probability layer and a binary ground-truth layer.
    /// At ignored pixels pass `G = 0` (background by convention).
    pub fn new(prob: &Field2D, gt: &Field2D, alpha: f64) -> Result<Self> {
        prob.same_dims(gt, "combined field inputs")?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidValue(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        let field = Field2D::from_fn(prob.height(), prob.width(), |y, x| {
            alpha * prob.get(y, x) - gt.get(y, x)
        });
        let (lo, hi) = (field.min(), field.max());
        if lo < -1.0 - 1e-12 || hi > alpha + 1e-12 {
            return Err(Error::InvalidValue(format!(
                "combined field range [{lo}, {hi}] exceeds [-1, {alpha}]"
            )));
        }
        Ok(CombinedField { field })
    }

    /// Wraps an arbitrary difference field (for direct energy evaluation).
    pub fn from_field(field: Field2D) -> Self {
        CombinedField { field }
    }

    pub fn field(&self) -> &Field2D {
        &self.field
    }
}

/// Kernel-weighted spectral power of a field: the quadratic form behind the
/// loss, applicable to any real field.
pub fn field_energy(field: &Field2D) -> f64 {
    let spectrum = dft_forward(field);
    spectral_energy(&spectrum)
}

/// Same quadratic form evaluated on an existing spectrum.
pub fn spectral_energy(spectrum: &SpectralField) -> f64 {
    let w = radius_weights(spectrum.height(), spectrum.width());
    spectrum
        .coefficients()
        .iter()
        .zip(w.weights())
        .map(|(c, &wk)| wk * c.norm_sqr())
        .sum()
}

/// Elastic interaction energy of a combined field.
pub fn eie_energy(d: &CombinedField) -> f64 {
    field_energy(d.field())
}

/// Exact derivative of [`field_energy`] with respect to every pixel:
/// `(2/(h*w)) * dft_inverse(w_mn * d_mn)`.
pub fn field_energy_gradient(field: &Field2D) -> Field2D {
    let (h, w) = field.dims();
    let spectrum = dft_forward(field);
    let weights = radius_weights(h, w);
    let weighted: Vec<_> = spectrum
        .coefficients()
        .iter()
        .zip(weights.weights())
        .map(|(c, &wk)| c * wk)
        .collect();
    let back = dft_inverse(&SpectralField::from_coefficients(h, w, weighted));
    let scale = 2.0 / (h * w) as f64;
    back.map(|v| v * scale)
}

/// Gradient of [`eie_energy`] with respect to each pixel of `D`.
pub fn eie_gradient(d: &CombinedField) -> Field2D {
    field_energy_gradient(d.field())
}

/// Self- and interaction terms of the energy of `alpha*sigma - G`,
/// recovered from the quadratic form: the cross term is the total minus the
/// two self-energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDecomposition {
    pub self_pred: f64,
    pub self_gt: f64,
    pub interaction: f64,
}

impl EnergyDecomposition {
    pub fn total(&self) -> f64 {
        self.self_pred + self.self_gt + self.interaction
    }
}

/// Splits the energy of `pred - gt` (with `pred` already carrying any alpha
/// scaling) into self-energies and the interaction term. Opposite
/// orientations make the interaction negative whenever the two shapes
/// attract.
pub fn energy_decompose(pred: &Field2D, gt: &Field2D) -> Result<EnergyDecomposition> {
    pred.same_dims(gt, "energy_decompose inputs")?;
    let self_pred = field_energy(pred);
    let self_gt = field_energy(gt);
    let diff = Field2D::from_fn(pred.height(), pred.width(), |y, x| {
        pred.get(y, x) - gt.get(y, x)
    });
    let total = field_energy(&diff);
    Ok(EnergyDecomposition {
        self_pred,
        self_gt,
        interaction: total - self_pred - self_gt,
    })
}

/// Per-pixel softmax across classes, max-subtracted for overflow safety.
pub fn softmax(logits: &LogitStack) -> ProbStack {
    let (n, h, w) = (logits.classes(), logits.height(), logits.width());
    let mut layers = vec![Field2D::zeros(h, w); n];
    for y in 0..h {
        for x in 0..w {
            let m = (0..n)
                .map(|c| logits.layer(c).get(y, x))
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..n {
                z += (logits.layer(c).get(y, x) - m).exp();
            }
            for (c, layer) in layers.iter_mut().enumerate() {
                layer.set(y, x, (logits.layer(c).get(y, x) - m).exp() / z);
            }
        }
    }
    ProbStack::from_layers_unchecked(layers)
}

fn check_stack_match(logits: &LogitStack, labels: &LabelStack) -> Result<()> {
    if logits.classes() != labels.classes() {
        return Err(Error::dim(format!(
            "class count mismatch: {} logits vs {} labels",
            logits.classes(),
            labels.classes()
        )));
    }
    logits.layer(0).same_dims(labels.layer(0), "logits vs labels")
}

/// Mean over non-ignored pixels of `-log sigma(P)[true class]`; 0 when every
/// pixel is ignored.
pub fn cross_entropy(logits: &LogitStack, labels: &LabelStack) -> Result<f64> {
    check_stack_match(logits, labels)?;
    let probs = softmax(logits);
    let (h, w) = (logits.height(), logits.width());
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            let Some(class) = labels.class_index(y, x) else {
                continue;
            };
            // clamp away from zero so saturated wrong predictions stay finite
            sum -= probs.layer(class).get(y, x).max(1e-300).ln();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Per-class energies plus the cross-entropy term and their weighted total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub eie_per_class: Vec<f64>,
    pub eie_total: f64,
    pub ce: f64,
    pub total: f64,
}

/// Evaluates the combined loss
/// `lambda1 * sum_i E(alpha*sigma_i - G_i) + lambda2 * CE`.
///
/// Class energies are accumulated in class order so results are identical no
/// matter how callers parallelise around this function.
pub fn combined_loss(
    logits: &LogitStack,
    labels: &LabelStack,
    cfg: &EieConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    check_stack_match(logits, labels)?;
    if logits.classes() < 2 {
        return Err(Error::dim("combined loss needs at least 2 classes"));
    }
    let probs = softmax(logits);
    let mut eie_per_class = Vec::with_capacity(logits.classes());
    let mut eie_total = 0.0;
    for c in 0..logits.classes() {
        let d = CombinedField::new(probs.layer(c), labels.layer(c), cfg.alpha)?;
        let e = eie_energy(&d);
        eie_per_class.push(e);
        eie_total += e;
    }
    let ce = cross_entropy(logits, labels)?;
    Ok(LossBreakdown {
        eie_per_class,
        eie_total,
        ce,
        total: cfg.lambda1 * eie_total + cfg.lambda2 * ce,
    })
}

/// Gradient of [`combined_loss`] with respect to the logits.
///
/// Cross-entropy contributes `lambda2 * (sigma - G) / M` at the `M`
/// non-ignored pixels; the energy contributes
/// `lambda1 * alpha * g_i` routed through the per-pixel softmax Jacobian,
/// `d/dP_c = sum_i g_i * sigma_i * (delta_ic - sigma_c)`. Ignored pixels get
/// a hard zero.
pub fn combined_loss_backward(
    logits: &LogitStack,
    labels: &LabelStack,
    cfg: &EieConfig,
) -> Result<LogitStack> {
    cfg.validate()?;
    check_stack_match(logits, labels)?;
    if logits.classes() < 2 {
        return Err(Error::dim("combined loss needs at least 2 classes"));
    }
    let (n, h, w) = (logits.classes(), logits.height(), logits.width());
    let probs = softmax(logits);
    let active = labels.active_pixels();

    let energy_grads: Option<Vec<Field2D>> = if cfg.lambda1 > 0.0 {
        let mut gs = Vec::with_capacity(n);
        for c in 0..n {
            let d = CombinedField::new(probs.layer(c), labels.layer(c), cfg.alpha)?;
            gs.push(eie_gradient(&d));
        }
        Some(gs)
    } else {
        None
    };

    let mut grad = LogitStack::zeros(n, h, w);
    for y in 0..h {
        for x in 0..w {
            if labels.is_ignored(y, x) {
                continue;
            }
            for c in 0..n {
                let mut g = 0.0;
                if cfg.lambda2 > 0.0 && active > 0 {
                    let target = labels.layer(c).get(y, x);
                    g += cfg.lambda2 * (probs.layer(c).get(y, x) - target) / active as f64;
                }
                if let Some(gs) = &energy_grads {
                    let sigma_c = probs.layer(c).get(y, x);
                    let mut acc = 0.0;
                    for (i, gi) in gs.iter().enumerate() {
                        let sigma_i = probs.layer(i).get(y, x);
                        let delta = if i == c { 1.0 } else { 0.0 };
                        acc += gi.get(y, x) * sigma_i * (delta - sigma_c);
                    }
                    g += cfg.lambda1 * cfg.alpha * acc;
                }
                grad.layer_mut(c).set(y, x, g);
            }
        }
    }
    Ok(grad)
}
