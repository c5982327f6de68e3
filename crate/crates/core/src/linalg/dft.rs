use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "complex {rows}x{cols} matrix with {} entries",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite complex entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1);
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_real(rows: usize, cols: usize, real: &[f64]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            real.iter().map(|&re| Complex64::new(re, 0.0)).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, z: Complex64) {
        self.data[r * self.cols + c] = z;
    }
}

/// Unnormalised 2-D DFT: `X[u,v] = Σ x[r,c]·exp(-2πi(ur/rows + vc/cols))`. Any sizes.
pub fn dft2(m: &ComplexMatrix) -> ComplexMatrix {
    transform(m, FftDirection::Forward, 1.0)
}

/// Inverse of [`dft2`], including the `1/(rows·cols)` factor.
pub fn idft2(m: &ComplexMatrix) -> ComplexMatrix {
    transform(m, FftDirection::Inverse, 1.0 / (m.rows * m.cols) as f64)
}

fn transform(m: &ComplexMatrix, direction: FftDirection, scale: f64) -> ComplexMatrix {
    let mut planner = FftPlanner::<f64>::new();
    let mut data = m.data.clone();

    let row_fft = planner.plan_fft(m.cols, direction);
    row_fft.process(&mut data);

    let col_fft = planner.plan_fft(m.rows, direction);
    let mut column = vec![Complex64::new(0.0, 0.0); m.rows];
    for c in 0..m.cols {
        for r in 0..m.rows {
            column[r] = data[r * m.cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..m.rows {
            data[r * m.cols + c] = column[r] * scale;
        }
    }
    ComplexMatrix {
        rows: m.rows,
        cols: m.cols,
        data,
    }
}
