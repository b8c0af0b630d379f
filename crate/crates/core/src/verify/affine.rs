//! Least-squares 2D affine fit `dst ≈ M src + c`.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFit<T> {
    /// Row-major 2x2 linear part.
    pub m: [[T; 2]; 2],
    pub c: [T; 2],
    /// Root mean squared residual over the fitted points.
    pub rmse: T,
}

impl<T: Scalar> AffineFit<T> {
    pub fn apply(&self, p: [T; 2]) -> [T; 2] {
        [
            self.m[0][0] * p[0] + self.m[0][1] * p[1] + self.c[0],
            self.m[1][0] * p[0] + self.m[1][1] * p[1] + self.c[1],
        ]
    }
}

fn centroid<T: Scalar>(pts: &[[T; 2]]) -> [T; 2] {
    let n = T::from_usize_lossy(pts.len());
    let sx: T = pts.iter().map(|p| p[0]).sum();
    let sy: T = pts.iter().map(|p| p[1]).sum();
    [sx / n, sy / n]
}

/// Fits on centered coordinates, which decouples the translation and keeps the 2x2
/// normal equations well conditioned. Returns `None` for fewer than three points or
/// a (near) collinear source set.
pub fn fit_affine<T: Scalar>(src: &[[T; 2]], dst: &[[T; 2]]) -> Option<AffineFit<T>> {
    assert_eq!(src.len(), dst.len(), "point sets differ in length");
    if src.len() < 3 {
        return None;
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    let mut cross = [[T::zero(); 2]; 2];
    for (s, d) in src.iter().zip(dst) {
        let u = [s[0] - cs[0], s[1] - cs[1]];
        let v = [d[0] - cd[0], d[1] - cd[1]];
        sxx = sxx + u[0] * u[0];
        sxy = sxy + u[0] * u[1];
        syy = syy + u[1] * u[1];
        for r in 0..2 {
            cross[r][0] = cross[r][0] + v[r] * u[0];
            cross[r][1] = cross[r][1] + v[r] * u[1];
        }
    }
    let det = sxx * syy - sxy * sxy;
    let scale = sxx + syy;
    if !(det > scale * scale * T::lit(1e-12)) {
        return None;
    }
    let inv = [[syy / det, -sxy / det], [-sxy / det, sxx / det]];
    let mut m = [[T::zero(); 2]; 2];
    for r in 0..2 {
        for k in 0..2 {
            m[r][k] = cross[r][0] * inv[0][k] + cross[r][1] * inv[1][k];
        }
    }
    let c = [
        cd[0] - m[0][0] * cs[0] - m[0][1] * cs[1],
        cd[1] - m[1][0] * cs[0] - m[1][1] * cs[1],
    ];
    let mut fit = AffineFit { m, c, rmse: T::zero() };
    let sse: T = src
        .iter()
        .zip(dst)
        .map(|(s, d)| {
            let p = fit.apply(*s);
            (p[0] - d[0]).powi(2) + (p[1] - d[1]).powi(2)
        })
        .sum();
    fit.rmse = (sse / T::from_usize_lossy(src.len())).sqrt();
    Some(fit)
}
