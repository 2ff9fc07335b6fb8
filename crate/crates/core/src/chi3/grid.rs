use num_complex::Complex64;

use crate::error::{Error, Result};

/// Cylindrical mode-field samples of a ring cross-section on an (r, z) grid.
///
/// Component arrays are row-major with `r` as the slow index:
/// sample `(i, j)` lives at `i * nz + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFieldGrid {
    r_axis: Vec<f64>,
    z_axis: Vec<f64>,
    pub e_r: Vec<Complex64>,
    pub e_phi: Vec<Complex64>,
    pub e_z: Vec<Complex64>,
    pub core_mask: Vec<bool>,
    /// Permittivity (F/m) per sample.
    pub permittivity: Vec<f64>,
}

impl ModeFieldGrid {
    pub fn new(
        r_axis: Vec<f64>,
        z_axis: Vec<f64>,
        e_r: Vec<Complex64>,
        e_phi: Vec<Complex64>,
        e_z: Vec<Complex64>,
        core_mask: Vec<bool>,
        permittivity: Vec<f64>,
    ) -> Result<Self> {
        let g = Self {
            r_axis,
            z_axis,
            e_r,
            e_phi,
            e_z,
            core_mask,
            permittivity,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let (nr, nz) = (self.r_axis.len(), self.z_axis.len());
        if nr < 2 || nz < 2 {
            return Err(Error::domain("mode grid needs at least 2 samples per axis"));
        }
        if !strictly_increasing(&self.r_axis) || !strictly_increasing(&self.z_axis) {
            return Err(Error::domain("grid axes must be strictly increasing"));
        }
        if self.r_axis[0] <= 0.0 {
            return Err(Error::domain("radii must be positive"));
        }
        let n = nr * nz;
        let lens = [
            self.e_r.len(),
            self.e_phi.len(),
            self.e_z.len(),
            self.core_mask.len(),
            self.permittivity.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::domain(format!(
                "component arrays must all have {n} samples, got {lens:?}"
            )));
        }
        if !self.core_mask.iter().any(|&m| m) {
            return Err(Error::domain("core mask is empty"));
        }
        Ok(())
    }

    pub fn r_axis(&self) -> &[f64] {
        &self.r_axis
    }

    pub fn z_axis(&self) -> &[f64] {
        &self.z_axis
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.r_axis.len(), self.z_axis.len())
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.z_axis.len() + j
    }

    /// Multiply every field sample by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut g = self.clone();
        for v in g.e_r.iter_mut().chain(g.e_phi.iter_mut()).chain(g.e_z.iter_mut()) {
            *v *= factor;
        }
        g
    }

    /// Trapezoid weights `w_r · w_z · r` over the whole grid.
    ///
    /// The 2π azimuthal factor is not included.
    pub fn weights(&self) -> Vec<f64> {
        let wr = trapezoid_weights(&self.r_axis);
        let wz = trapezoid_weights(&self.z_axis);
        let mut w = Vec::with_capacity(wr.len() * wz.len());
        for (&r, &a) in self.r_axis.iter().zip(&wr) {
            for &b in &wz {
                w.push(a * b * r);
            }
        }
        w
    }

    /// Same as [`weights`](Self::weights) but zero outside the core.
    pub fn core_weights(&self) -> Vec<f64> {
        let mut w = self.weights();
        for (w, &m) in w.iter_mut().zip(&self.core_mask) {
            if !m {
                *w = 0.0;
            }
        }
        w
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

/// One-dimensional trapezoid weights on a nonuniform axis.
pub(crate) fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let h = 0.5 * (axis[k + 1] - axis[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}
