//! Discrete Fourier transforms and the frequency-radius kernel.
//!
//! Conventions, fixed across the crate:
//!
//! * forward: `d[m][n] = (1/(h*w)) * sum_{x,y} f[y][x] * exp(-2*pi*i*(m*y/h + n*x/w))`
//! * inverse: `f[y][x] = sum_{m,n} d[m][n] * exp(+2*pi*i*(m*y/h + n*x/w))`
//!
//! The forward transform carries the whole `1/(h*w)` factor so a constant
//! field has a single DC coefficient equal to that constant, and coefficient
//! magnitudes do not change when a constant region is rescaled with the grid.
//! Frequencies are unnormalized integer cycles per image; the kernel weight
//! of bin `(m, n)` is `sqrt(km^2 + kn^2)` with the signed frequency
//! `km = m` for `m <= h/2` and `m - h` otherwise.
//!
//! Arbitrary (non power-of-two) dimensions are supported; the plans come
//! from rustfft, which falls back to Bluestein for prime sizes, and are
//! cached per thread.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::field::Field2D;

/// Complex DFT coefficients of one field, row-major over `(m, n)` bins.
#[derive(Debug, Clone)]
pub struct SpectralField {
    height: usize,
    width: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.coeffs[m * self.width + n]
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Builds a spectrum from raw coefficients (test and synthesis helper).
    pub fn from_coefficients(height: usize, width: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), height * width, "coefficient count mismatch");
        SpectralField {
            height,
            width,
            coeffs,
        }
    }
}

/// Nonnegative kernel weights `sqrt(km^2 + kn^2)` per bin; the DC weight is
/// exactly zero, which makes the energy blind to constant offsets.
#[derive(Debug)]
pub struct RadiusWeights {
    height: usize,
    width: usize,
    weights: Vec<f64>,
}

impl RadiusWeights {
    fn build(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0);
        let mut weights = Vec::with_capacity(height * width);
        for m in 0..height {
            let km = signed_frequency(m, height);
            for n in 0..width {
                let kn = signed_frequency(n, width);
                weights.push((km * km + kn * kn).sqrt());
            }
        }
        RadiusWeights {
            height,
            width,
            weights,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.weights[m * self.width + n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Signed integer frequency of bin `m` on an axis of length `len`.
#[inline]
pub fn signed_frequency(m: usize, len: usize) -> f64 {
    if m <= len / 2 {
        m as f64
    } else {
        m as f64 - len as f64
    }
}

/// Kernel weights for an `h x w` grid, cached and shared for concurrent use.
pub fn radius_weights(height: usize, width: usize) -> Arc<RadiusWeights> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<RadiusWeights>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("weights cache poisoned");
    map.entry((height, width))
        .or_insert_with(|| Arc::new(RadiusWeights::build(height, width)))
        .clone()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place 2D FFT: rows of length `w`, then columns of length `h`.
fn fft_2d(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = if inverse {
            planner.plan_fft_inverse(w)
        } else {
            planner.plan_fft_forward(w)
        };
        for row in data.chunks_exact_mut(w) {
            row_fft.process(row);
        }
        let col_fft = if inverse {
            planner.plan_fft_inverse(h)
        } else {
            planner.plan_fft_forward(h)
        };
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = data[y * w + x];
            }
            col_fft.process(&mut column);
            for y in 0..h {
                data[y * w + x] = column[y];
            }
        }
    });
}

/// Forward transform under the `1/(h*w)` convention.
pub fn dft_forward(field: &Field2D) -> SpectralField {
    let (h, w) = field.dims();
    let mut data: Vec<Complex64> = field
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft_2d(&mut data, h, w, false);
    let scale = 1.0 / (h * w) as f64;
    for c in &mut data {
        *c *= scale;
    }
    SpectralField {
        height: h,
        width: w,
        coeffs: data,
    }
}

/// Inverse transform (no normalization factor); the imaginary residue is
/// discarded, which is exact up to rounding for conjugate-symmetric input.
pub fn dft_inverse(spectrum: &SpectralField) -> Field2D {
    let (h, w) = spectrum.dims();
    let mut data = spectrum.coeffs.clone();
    fft_2d(&mut data, h, w, true);
    Field2D::new(h, w, data.into_iter().map(|c| c.re).collect())
        .expect("inverse transform produced non-finite values")
}
