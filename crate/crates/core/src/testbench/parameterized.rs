use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{linear_bench, Testbench};
use crate::distributions::special::normal_cdf;
use crate::error::{Error, Result};

/// Linear benches whose offset depends on a design vector z:
/// fails iff aᵀx ≥ b(z), with b(z) = c₀ + c₁ᵀz − ½ zᵀC₂z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticFamily {
    pub a: Vec<f64>,
    pub c0: f64,
    pub c1: Vec<f64>,
    /// Row-major C₂.
    pub c2: Vec<Vec<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QuadraticFamily {
    /// Family with C₂ = I and c₁ = z*, so b peaks at `z_star` with value
    /// `c0 + ½‖z*‖²`.
    pub fn isotropic(a: Vec<f64>, c0: f64, z_star: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = z_star.len();
        let c2 = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let fam = Self {
            a,
            c0,
            c1: z_star,
            c2,
            lower,
            upper,
        };
        fam.validate()?;
        Ok(fam)
    }

    /// Variation-space dimension D.
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Design dimension.
    pub fn design_dim(&self) -> usize {
        self.c1.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.design_dim();
        if self.a.is_empty() || self.a.iter().all(|&v| v == 0.0) {
            return Err(Error::contract("family normal `a` must be nonzero"));
        }
        if n == 0 {
            return Err(Error::contract("design vector must have at least one coordinate"));
        }
        if self.c2.len() != n || self.c2.iter().any(|r| r.len() != n) {
            return Err(Error::contract(format!("c2 must be {n}x{n}")));
        }
        Error::check_dim(n, self.lower.len())?;
        Error::check_dim(n, self.upper.len())?;
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::contract("box lower bound exceeds upper bound"));
        }
        let all = self
            .a
            .iter()
            .chain(&self.c1)
            .chain(self.c2.iter().flatten())
            .chain(&self.lower)
            .chain(&self.upper)
            .chain(std::iter::once(&self.c0));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("family parameters must be finite"));
        }
        Ok(())
    }

    fn c2_matrix(&self) -> DMatrix<f64> {
        let n = self.design_dim();
        DMatrix::from_fn(n, n, |i, j| self.c2[i][j])
    }

    fn a_norm(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.design_dim() && z.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Clamps `z` into the box.
    pub fn project(&self, z: &mut [f64]) {
        for ((v, l), u) in z.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        Error::check_dim(self.design_dim(), z.len())?;
        if !self.contains(z) {
            return Err(Error::contract(format!("design {z:?} is outside the box")));
        }
        Ok(())
    }

    /// b(z), the boundary offset.
    pub fn offset(&self, z: &[f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        let c1 = DVector::from_column_slice(&self.c1);
        self.c0 + c1.dot(&zv) - 0.5 * zv.dot(&(self.c2_matrix() * &zv))
    }

    /// ∇b(z) = c₁ − ½(C₂ + C₂ᵀ)z.
    pub fn offset_gradient(&self, z: &[f64]) -> Vec<f64> {
        let zv = DVector::from_column_slice(z);
        let c2 = self.c2_matrix();
        let sym = 0.5 * (&c2 + c2.transpose());
        (DVector::from_column_slice(&self.c1) - sym * zv).as_slice().to_vec()
    }

    /// Distance from the origin to the failure boundary, b(z)/‖a‖.
    pub fn margin(&self, z: &[f64]) -> f64 {
        self.offset(z) / self.a_norm()
    }

    /// Φ(−b(z)/‖a‖).
    pub fn oracle_pf(&self, z: &[f64]) -> f64 {
        normal_cdf(-self.margin(z))
    }

    /// Unconstrained maximizer of b, C₂⁻¹c₁, when C₂ is positive definite.
    pub fn maximizer(&self) -> Option<Vec<f64>> {
        let c2 = self.c2_matrix();
        let sym = 0.5 * (&c2 + c2.transpose());
        let chol = sym.cholesky()?;
        Some(chol.solve(&DVector::from_column_slice(&self.c1)).as_slice().to_vec())
    }

    /// The linear bench at design `z`.
    pub fn bench(&self, z: &[f64]) -> Result<Testbench> {
        self.check(z)?;
        linear_bench(self.a.clone(), self.offset(z))
    }
}
