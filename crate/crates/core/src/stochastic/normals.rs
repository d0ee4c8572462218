use alloc::vec::Vec;

use super::RngStream;

/// Increments `B_i = sum_j rows[i][j] Z_j sqrt(dt)` of the correlated Brownian
/// components over a step `dt`; their covariance is `rows rowsᵀ dt`.
pub fn correlated_normals<R: AsRef<[f64]>>(rows: &[R], dt: f64, rng: &mut RngStream) -> Vec<f64> {
    let factors = rows.first().map_or(0, |r| r.as_ref().len());
    let mut z = alloc::vec![0.0; factors];
    let mut out = alloc::vec![0.0; rows.len()];
    correlated_normals_into(rows, dt, rng, &mut z, &mut out);
    out
}

/// Allocation-free form of [`correlated_normals`]; `z` must hold one slot per
/// Brownian factor and `out` one per row.
pub fn correlated_normals_into<R: AsRef<[f64]>>(
    rows: &[R],
    dt: f64,
    rng: &mut RngStream,
    z: &mut [f64],
    out: &mut [f64],
) {
    let scale = libm::sqrt(dt);
    for zj in z.iter_mut() {
        *zj = rng.standard_normal();
    }
    for (o, row) in out.iter_mut().zip(rows) {
        *o = scale * row.as_ref().iter().zip(z.iter()).map(|(s, z)| s * z).sum::<f64>();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sigma_rows_from_corr;

    #[test]
    fn vanishing_step_gives_vanishing_increments() {
        let mut rng = RngStream::new(2, 0);
        let rows = [[1.0, 0.0], [0.5, 0.5]];
        for _ in 0..1000 {
            let b = correlated_normals(&rows, 1e-16, &mut rng);
            assert!(b.iter().all(|x| x.abs() < 1e-6));
        }
    }

    #[test]
    fn correlation_of_factor_rows() {
        let rows = sigma_rows_from_corr(1.0, 1.0, 0.4).unwrap();
        let mut rng = RngStream::new(11, 0);
        let n = 200_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let b = correlated_normals(&rows, 1.0, &mut rng);
            sxy += b[0] * b[1];
            sxx += b[0] * b[0];
            syy += b[1] * b[1];
        }
        let rho = sxy / libm::sqrt(sxx * syy);
        assert!((rho - 0.4).abs() < 0.01, "{rho}");
    }
}
