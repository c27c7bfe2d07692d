//! Connected-component labeling of thresholded masks.
//!
//! Used to count the disconnected pieces of a prediction, e.g. to check
//! whether a broken structure has healed during evolution.

use crate::field::Field2D;

/// Result of a labeling pass: background is 0, components are 1..=count in
/// the order their first pixel is met by a row-major scan.
#[derive(Debug, Clone)]
pub struct Components {
    height: usize,
    width: usize,
    count: usize,
    labels: Vec<u32>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn label(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Pixel count of component `label` (1-based).
    pub fn size_of(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Labels as a field, handy for dumping to FLD/PGM.
    pub fn label_field(&self) -> Field2D {
        Field2D::new(
            self.height,
            self.width,
            self.labels.iter().map(|&l| l as f64).collect(),
        )
        .expect("labels are finite")
    }
}

/// Labels the 4-connected components of `{pixels with value > threshold}`.
pub fn connected_components(mask: &Field2D, threshold: f64) -> Components {
    let (h, w) = mask.dims();
    let fg: Vec<bool> = mask.values().iter().map(|&v| v > threshold).collect();
    let mut labels = vec![0u32; h * w];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (y, x) = (p / w, p % w);
            let mut visit = |q: usize| {
                if fg[q] && labels[q] == 0 {
                    labels[q] = count;
                    stack.push(q);
                }
            };
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
        }
    }
    Components {
        height: h,
        width: w,
        count: count as usize,
        labels,
    }
}
