//! Dense scalar fields and per-class stacks.
//!
//! A [`Field2D`] is one real-valued `h x w` grid stored row-major: a class
//! channel, a mask or a gradient map. Stacks bundle `N` such layers: the
//! one-hot ground truth ([`LabelStack`]), raw classifier scores
//! ([`LogitStack`]) and softmax probabilities ([`ProbStack`]).
//!
//! Every constructor validates its invariants (finiteness, one-hot rows,
//! probability simplex) so downstream numerics never have to re-check.

use crate::error::{Error, Result};

/// Real-valued `height x width` scalar field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Field2D {
    /// Builds a field from row-major values, checking shape and finiteness.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim(format!(
                "field dimensions must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::dim(format!(
                "expected {} values for a {height}x{width} field, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite value {} at flat index {i}",
                values[i]
            )));
        }
        Ok(Field2D {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "field dimensions must be positive");
        Field2D {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        assert!(value.is_finite(), "field values must be finite");
        let mut f = Field2D::zeros(height, width);
        f.values.fill(value);
        f
    }

    /// Builds a field by evaluating `f(y, x)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Field2D::zeros(height, width);
        for y in 0..height {
            for x in 0..width {
                out.set(y, x, f(y, x));
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dimensions are always >= 1
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        assert!(v.is_finite(), "field values must be finite, got {v}");
        self.values[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pixel-wise map; the result is validated for finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field2D {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        Field2D::new(self.height, self.width, values).expect("map produced non-finite values")
    }

    pub(crate) fn same_dims(&self, other: &Field2D, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dim(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Shrinks a field by an integer factor `s`, sampling the bilinear
/// interpolant at the center of each `s x s` source block.
///
/// Pixel centers sit at integer coordinates, so the block center is at
/// fractional offset `(s - 1) / 2`; for odd `s` this is an exact source
/// pixel, for even `s` the mean of the four neighbours. `s` must divide both
/// dimensions.
pub fn downsample_bilinear(field: &Field2D, s: usize) -> Result<Field2D> {
    if s == 0 {
        return Err(Error::dim("downsample factor must be positive"));
    }
    let (h, w) = field.dims();
    if h % s != 0 || w % s != 0 {
        return Err(Error::dim(format!(
            "factor {s} does not divide {h}x{w}"
        )));
    }
    if s == 1 {
        return Ok(field.clone());
    }
    let half = (s - 1) as f64 / 2.0;
    let out = Field2D::from_fn(h / s, w / s, |i, j| {
        let sy = i as f64 * s as f64 + half;
        let sx = j as f64 * s as f64 + half;
        let y0 = sy.floor() as usize;
        let x0 = sx.floor() as usize;
        let fy = sy - y0 as f64;
        let fx = sx - x0 as f64;
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let v00 = field.get(y0, x0);
        let v01 = field.get(y0, x1);
        let v10 = field.get(y1, x0);
        let v11 = field.get(y1, x1);
        v00 * (1.0 - fy) * (1.0 - fx)
            + v01 * (1.0 - fy) * fx
            + v10 * fy * (1.0 - fx)
            + v11 * fy * fx
    });
    Ok(out)
}

fn check_layers(classes: usize, layers: &[Field2D]) -> Result<(usize, usize)> {
    if classes == 0 || layers.is_empty() {
        return Err(Error::dim("a stack needs at least one class layer"));
    }
    if layers.len() != classes {
        return Err(Error::dim(format!(
            "stack declares {classes} classes but holds {} layers",
            layers.len()
        )));
    }
    let dims = layers[0].dims();
    for (i, l) in layers.iter().enumerate() {
        if l.dims() != dims {
            return Err(Error::dim(format!(
                "layer {i} is {}x{}, expected {}x{}",
                l.height(),
                l.width(),
                dims.0,
                dims.1
            )));
        }
    }
    Ok(dims)
}

/// One-hot ground truth: `N` binary layers plus an optional ignore mask.
///
/// At every non-ignored pixel exactly one layer is 1; at ignored pixels all
/// layers are 0, so the loss modules can mask them without special cases.
#[derive(Debug, Clone)]
pub struct LabelStack {
    layers: Vec<Field2D>,
    ignore: Option<Vec<bool>>,
}

impl LabelStack {
    pub fn from_layers(layers: Vec<Field2D>, ignore: Option<Vec<bool>>) -> Result<Self> {
        let (h, w) = check_layers(layers.len(), &layers)?;
        if let Some(mask) = &ignore {
            if mask.len() != h * w {
                return Err(Error::dim(format!(
                    "ignore mask has {} entries, expected {}",
                    mask.len(),
                    h * w
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.values().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidValue(format!(
                    "label layer {i} holds values outside {{0, 1}}"
                )));
            }
        }
        let stack = LabelStack { layers, ignore };
        for p in 0..h * w {
            let ones: usize = (0..stack.classes())
                .filter(|&c| stack.layers[c].values()[p] == 1.0)
                .count();
            let expected = if stack.ignored_flat(p) { 0 } else { 1 };
            if ones != expected {
                return Err(Error::InvalidValue(format!(
                    "pixel {p} has {ones} active classes, expected {expected}"
                )));
            }
        }
        Ok(stack)
    }

    /// Builds the stack from integer class indices. Pixels equal to
    /// `ignore_label` get the all-zeros row and are flagged in the mask.
    pub fn from_indices(
        height: usize,
        width: usize,
        classes: usize,
        indices: &[u32],
        ignore_label: Option<u32>,
    ) -> Result<Self> {
        if indices.len() != height * width {
            return Err(Error::dim(format!(
                "expected {} class indices, got {}",
                height * width,
                indices.len()
            )));
        }
        let mut layers = vec![Field2D::zeros(height, width); classes];
        let mut ignore = vec![false; height * width];
        let mut any_ignored = false;
        for (p, &idx) in indices.iter().enumerate() {
            if Some(idx) == ignore_label {
                ignore[p] = true;
                any_ignored = true;
                continue;
            }
            if idx as usize >= classes {
                return Err(Error::InvalidValue(format!(
                    "class index {idx} at pixel {p} exceeds class count {classes}"
                )));
            }
            layers[idx as usize].values[p] = 1.0;
        }
        LabelStack::from_layers(layers, any_ignored.then_some(ignore))
    }

    pub fn classes(&self) -> usize {
        self.layers.len()
    }

    pub fn height(&self) -> usize {
        self.layers[0].height()
    }

    pub fn width(&self) -> usize {
        self.layers[0].width()
    }

    pub fn layer(&self, class: usize) -> &Field2D {
        &self.layers[class]
    }

    pub fn is_ignored(&self, y: usize, x: usize) -> bool {
        self.ignored_flat(y * self.width() + x)
    }

    pub(crate) fn ignored_flat(&self, p: usize) -> bool {
        self.ignore.as_ref().map_or(false, |m| m[p])
    }

    /// Number of pixels that take part in the loss.
    pub fn active_pixels(&self) -> usize {
        let total = self.height() * self.width();
        match &self.ignore {
            Some(m) => total - m.iter().filter(|&&b| b).count(),
            None => total,
        }
    }

    /// Class index per pixel; `None` at ignored pixels.
    pub fn class_index(&self, y: usize, x: usize) -> Option<usize> {
        let p = y * self.width() + x;
        if self.ignored_flat(p) {
            return None;
        }
        (0..self.classes()).find(|&c| self.layers[c].values()[p] == 1.0)
    }
}

/// Raw per-class scores `P` produced by a classifier head.
#[derive(Debug, Clone)]
pub struct LogitStack {
    layers: Vec<Field2D>,
}

impl LogitStack {
    pub fn from_layers(layers: Vec<Field2D>) -> Result<Self> {
        check_layers(layers.len(), &layers)?;
        Ok(LogitStack { layers })
    }

    pub fn zeros(classes: usize, height: usize, width: usize) -> Self {
        assert!(classes > 0, "stack needs at least one class");
        LogitStack {
            layers: vec![Field2D::zeros(height, width); classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.layers.len()
    }

    pub fn height(&self) -> usize {
        self.layers[0].height()
    }

    pub fn width(&self) -> usize {
        self.layers[0].width()
    }

    pub fn layer(&self, class: usize) -> &Field2D {
        &self.layers[class]
    }

    pub fn layer_mut(&mut self, class: usize) -> &mut Field2D {
        &mut self.layers[class]
    }

    pub fn layers(&self) -> &[Field2D] {
        &self.layers
    }
}

/// Softmax probabilities: per pixel the class values sum to 1 (within 1e-9).
#[derive(Debug, Clone)]
pub struct ProbStack {
    layers: Vec<Field2D>,
}

impl ProbStack {
    pub fn from_layers(layers: Vec<Field2D>) -> Result<Self> {
        let (h, w) = check_layers(layers.len(), &layers)?;
        for l in &layers {
            if l.values().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidValue(
                    "probabilities must lie in [0, 1]".into(),
                ));
            }
        }
        for p in 0..h * w {
            let s: f64 = layers.iter().map(|l| l.values()[p]).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidValue(format!(
                    "probabilities at pixel {p} sum to {s}, expected 1"
                )));
            }
        }
        Ok(ProbStack { layers })
    }

    /// Skips the simplex re-check; for the softmax path whose output is
    /// normalized by construction.
    pub(crate) fn from_layers_unchecked(layers: Vec<Field2D>) -> Self {
        ProbStack { layers }
    }

    pub fn classes(&self) -> usize {
        self.layers.len()
    }

    pub fn height(&self) -> usize {
        self.layers[0].height()
    }

    pub fn width(&self) -> usize {
        self.layers[0].width()
    }

    pub fn layer(&self, class: usize) -> &Field2D {
        &self.layers[class]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    #[test]
    fn downsample_preserves_constants_and_identity() {
        let f = Field2D::constant(4, 8, 1.0);
        for s in [1, 2, 4] {
            let d = downsample_bilinear(&f, s).unwrap();
            assert_eq!(d.dims(), (4 / s, 8 / s));
            assert!(d.values().iter().all(|&v| v == 1.0));
        }
        let g = Field2D::from_fn(4, 4, |y, x| (y * 4 + x) as f64);
        assert_eq!(downsample_bilinear(&g, 1).unwrap(), g);
    }

    #[test]
    fn downsample_checkerboard_matches_hand_evaluation() {
        // 4x4 checkerboard of {0,1}; s = 2 block centers land at fractional
        // offset 0.5, so each output is the mean of its 2x2 block: every
        // block holds two 0s and two 1s, giving 0.5 everywhere.
        let f = Field2D::from_fn(4, 4, |y, x| ((y + x) % 2) as f64);
        let d = downsample_bilinear(&f, 2).unwrap();
        assert_eq!(d.dims(), (2, 2));
        for &v in d.values() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        // and an asymmetric pattern where the four block values differ
        let g = Field2D::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let tiled = Field2D::from_fn(4, 4, |y, x| g.get(y % 2, x % 2));
        let d2 = downsample_bilinear(&tiled, 2).unwrap();
        for &v in d2.values() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn downsample_rejects_non_divisible() {
        let f = Field2D::zeros(4, 6);
        assert!(matches!(
            downsample_bilinear(&f, 4),
            Err(Error::Dimension(_))
        ));
    }

    proptest! {
        #[test]
        fn downsample_stays_within_input_range(seed in any::<u64>(), s in 1usize..4) {
            let mut rng = SplitMix64::new(seed);
            let h = s * (1 + (seed as usize) % 3 + 1);
            let f = Field2D::from_fn(h, s * 2, |_, _| rng.uniform(-5.0, 5.0));
            let d = downsample_bilinear(&f, s).unwrap();
            prop_assert!(d.min() >= f.min() - 1e-12);
            prop_assert!(d.max() <= f.max() + 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_value_count() {
        assert!(matches!(
            Field2D::new(2, 2, vec![0.0; 3]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Field2D::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::InvalidValue(_))
        ));
    }

    #[test]
    fn one_hot_enforced() {
        let a = Field2D::new(1, 2, vec![1.0, 0.0]).unwrap();
        let b = Field2D::new(1, 2, vec![1.0, 1.0]).unwrap();
        assert!(LabelStack::from_layers(vec![a.clone(), a.clone()], None).is_err());
        assert!(LabelStack::from_layers(vec![a.clone(), b], None).is_err());
        let c = Field2D::new(1, 2, vec![0.0, 1.0]).unwrap();
        let stack = LabelStack::from_layers(vec![a, c], None).unwrap();
        assert_eq!(stack.class_index(0, 0), Some(0));
        assert_eq!(stack.class_index(0, 1), Some(1));
    }

    #[test]
    fn ignore_label_maps_to_zero_row() {
        let stack = LabelStack::from_indices(2, 2, 2, &[0, 1, 255, 0], Some(255)).unwrap();
        assert!(stack.is_ignored(1, 0));
        assert_eq!(stack.layer(0).get(1, 0), 0.0);
        assert_eq!(stack.layer(1).get(1, 0), 0.0);
        assert_eq!(stack.active_pixels(), 3);
        assert_eq!(stack.class_index(1, 0), None);
    }

    #[test]
    fn prob_stack_validates_simplex() {
        let a = Field2D::new(1, 1, vec![0.6]).unwrap();
        let b = Field2D::new(1, 1, vec![0.5]).unwrap();
        assert!(ProbStack::from_layers(vec![a.clone(), b]).is_err());
        let c = Field2D::new(1, 1, vec![0.4]).unwrap();
        assert!(ProbStack::from_layers(vec![a, c]).is_ok());
    }
}
