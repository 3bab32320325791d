use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric 2×2 matrix `[[a, b], [b, c]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Lower-triangular factor `[[u, 0], [v, w]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chol2 {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Sym2 { a, b, c }
    }

    pub fn identity() -> Self {
        Sym2::new(1.0, 0.0, 1.0)
    }

    /// Covariance from standard deviations and a correlation.
    pub fn from_sd_corr(sd1: f64, sd2: f64, rho: f64) -> Self {
        Sym2::new(sd1 * sd1, rho * sd1 * sd2, sd2 * sd2)
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0 && self.c == 0.0
    }

    /// Inverse of a positive-definite matrix.
    pub fn inverse(&self) -> Result<Sym2> {
        check_pd(self)?;
        let d = self.det();
        Ok(Sym2::new(self.c / d, -self.b / d, self.a / d))
    }

    pub fn correlation(&self) -> f64 {
        self.b / (self.a * self.c).sqrt()
    }
}

impl Chol2 {
    /// D·Dᵀ
    pub fn outer(&self) -> Sym2 {
        Sym2::new(
            self.u * self.u,
            self.u * self.v,
            self.v * self.v + self.w * self.w,
        )
    }

    /// D·z
    pub fn apply(&self, z: (f64, f64)) -> (f64, f64) {
        (self.u * z.0, self.v * z.0 + self.w * z.1)
    }
}

fn check_pd(m: &Sym2) -> Result<()> {
    if !(m.a > 0.0) {
        return Err(Error::NotPositiveDefinite("leading element a must be > 0"));
    }
    if !(m.c > 0.0) {
        return Err(Error::NotPositiveDefinite("trailing element c must be > 0"));
    }
    // relative test so that b = sqrt(ac) computed in floating point is caught
    if !(m.det() > 1e-14 * m.a * m.c) {
        return Err(Error::NotPositiveDefinite(
            "determinant a·c − b² must be > 0",
        ));
    }
    Ok(())
}

pub fn cholesky2(m: Sym2) -> Result<Chol2> {
    check_pd(&m)?;
    let u = m.a.sqrt();
    let v = m.b / u;
    let w = (m.c - m.b * m.b / m.a).sqrt();
    Ok(Chol2 { u, v, w })
}

/// Draw `mean + D·z` with `D = cholesky2(cov)`.
pub fn correlated_normal_pair<R: Rng + ?Sized>(
    rng: &mut R,
    mean: (f64, f64),
    cov: Sym2,
) -> Result<(f64, f64)> {
    let d = cholesky2(cov)?;
    let z = (StandardNormal.sample(rng), StandardNormal.sample(rng));
    let (x, y) = d.apply(z);
    Ok((mean.0 + x, mean.1 + y))
}
