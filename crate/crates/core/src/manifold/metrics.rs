//! Intrinsic dimension, trajectory curvature and Pearson selectivity.

use nalgebra::DMatrix;
use ndarray::{Array1, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.95;

/// Sample-covariance eigenvalues of the rows of `x`, largest first.
///
/// Length is `min(n - 1, m)`; any further eigenvalues are exactly zero.
pub fn pca_eigenvalues(x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let (n, m) = x.dim();
    if n < 2 {
        return Err(Error::Argument(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if m == 0 {
        return Err(Error::Argument("PCA needs at least 1 column".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = DMatrix::from_fn(n, m, |i, j| x[[i, j]] - mean[j]);
    let svd = centered.svd(false, false);
    let mut eigs: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s * s / (n - 1) as f64)
        .collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    eigs.truncate((n - 1).min(m));
    Ok(eigs)
}

/// Smallest k whose leading eigenvalues explain at least `tau` of the variance.
pub fn intrinsic_dimension(eigs: &[f64], tau: f64) -> Result<usize> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Argument(format!(
            "tau must lie in (0, 1], got {tau}"
        )));
    }
    if let Some(v) = eigs.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Argument(format!(
            "eigenvalues must be finite and >= 0, got {v}"
        )));
    }
    if eigs.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Argument("eigenvalues must be non-increasing".into()));
    }
    let total: f64 = eigs.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all eigenvalues are zero".into()));
    }
    let mut cum = 0.0;
    for (k, v) in eigs.iter().enumerate() {
        cum += v;
        if cum / total >= tau {
            return Ok(k + 1);
        }
    }
    // Rounding can leave cum/total a hair below 1 when tau = 1.
    Ok(eigs
        .iter()
        .rposition(|v| *v > 0.0)
        .map_or(eigs.len(), |i| i + 1))
}

/// Mean norm of second differences along the rows of `traj` (points in order).
pub fn curvature(traj: ArrayView2<'_, f64>) -> Result<f64> {
    let t = traj.nrows();
    if t < 3 {
        return Err(Error::Argument(format!(
            "curvature needs at least 3 points, got {t}"
        )));
    }
    let total: f64 = (0..t - 2)
        .map(|i| {
            let a = traj.row(i);
            let b = traj.row(i + 1);
            let c = traj.row(i + 2);
            a.iter()
                .zip(b.iter())
                .zip(c.iter())
                .map(|((a, b), c)| {
                    let d = c - 2.0 * b + a;
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / (t - 2) as f64)
}

/// Per-column Pearson correlation with `p` and the mean absolute correlation.
///
/// Constant columns get rho = 0.
pub fn selectivity(x: ArrayView2<'_, f64>, p: &[f64]) -> Result<(Array1<f64>, f64)> {
    let (n, d) = x.dim();
    if n != p.len() {
        return Err(Error::Argument(format!(
            "feature rows ({n}) and severities ({}) differ in length",
            p.len()
        )));
    }
    if n < 3 {
        return Err(Error::Argument(format!(
            "selectivity needs at least 3 samples, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::Argument(
            "selectivity needs at least 1 feature".into(),
        ));
    }
    if p.iter().all(|v| *v == p[0]) {
        return Err(Error::Argument("severities are constant".into()));
    }
    let p_mean = p.iter().sum::<f64>() / n as f64;
    let pc: Vec<f64> = p.iter().map(|v| v - p_mean).collect();
    let spp: f64 = pc.iter().map(|v| v * v).sum();
    let rho: Array1<f64> = x
        .axis_iter(Axis(1))
        .map(|col| {
            let first = col[0];
            if col.iter().all(|v| *v == first) {
                return 0.0;
            }
            let mean = col.sum() / n as f64;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (v, q) in col.iter().zip(&pc) {
                let c = v - mean;
                sxy += c * q;
                sxx += c * c;
            }
            if sxx == 0.0 {
                0.0
            } else {
                (sxy / (sxx * spp).sqrt()).clamp(-1.0, 1.0)
            }
        })
        .collect();
    let s = rho.iter().map(|r| r.abs()).sum::<f64>() / d as f64;
    Ok((rho, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0))
    }

    // Textbook formula on the covariance matrix, eigenvalues by Jacobi rotation.
    fn covariance_eigs_oracle(x: &Array2<f64>) -> Vec<f64> {
        let (n, m) = x.dim();
        let mean = x.mean_axis(Axis(0)).unwrap();
        let mut c = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                c[i][j] = (0..n)
                    .map(|r| (x[[r, i]] - mean[i]) * (x[[r, j]] - mean[j]))
                    .sum::<f64>()
                    / (n - 1) as f64;
            }
        }
        for _ in 0..100 {
            for p in 0..m {
                for q in p + 1..m {
                    if c[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (c[q][q] - c[p][p]) / (2.0 * c[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let (cs, sn) = (1.0 / (t * t + 1.0).sqrt(), t / (t * t + 1.0).sqrt());
                    for k in 0..m {
                        let (a, b) = (c[k][p], c[k][q]);
                        c[k][p] = cs * a - sn * b;
                        c[k][q] = sn * a + cs * b;
                    }
                    for k in 0..m {
                        let (a, b) = (c[p][k], c[q][k]);
                        c[p][k] = cs * a - sn * b;
                        c[q][k] = sn * a + cs * b;
                    }
                }
            }
        }
        let mut e: Vec<f64> = (0..m).map(|i| c[i][i]).collect();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }

    #[test]
    fn line_in_plane_has_one_component() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let e = pca_eigenvalues(x.view()).unwrap();
        assert_eq!(e.len(), 2);
        assert_relative_eq!(e[0], 2.0, epsilon = 1e-12);
        assert!(e[1].abs() < 1e-12);
        assert_eq!(intrinsic_dimension(&e, 0.95).unwrap(), 1);
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let x = Array2::from_elem((4, 3), 0.25);
        let e = pca_eigenvalues(x.view()).unwrap();
        assert!(e.iter().all(|v| *v == 0.0));
        assert!(matches!(
            intrinsic_dimension(&e, 0.95),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn single_row_is_rejected() {
        let x = Array2::<f64>::zeros((1, 3));
        assert!(matches!(pca_eigenvalues(x.view()), Err(Error::Argument(_))));
    }

    #[test]
    fn spectrum_length_is_rank_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(
            pca_eigenvalues(random_matrix(&mut rng, 8, 50).view())
                .unwrap()
                .len(),
            7
        );
        assert_eq!(
            pca_eigenvalues(random_matrix(&mut rng, 30, 5).view())
                .unwrap()
                .len(),
            5
        );
    }

    #[test]
    fn spectrum_matches_jacobi_oracle_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = random_matrix(&mut rng, 20, 8);
            let e = pca_eigenvalues(x.view()).unwrap();
            let o = covariance_eigs_oracle(&x);
            for (a, b) in e.iter().zip(&o) {
                assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-9);
            }
            let mean = x.mean_axis(Axis(0)).unwrap();
            let trace: f64 = (&x - &mean).mapv(|v| v * v).sum() / 19.0;
            assert_relative_eq!(e.iter().sum::<f64>(), trace, max_relative = 1e-9);
        }
    }

    #[test]
    fn equal_shares_need_ceil_tau_m() {
        assert_eq!(intrinsic_dimension(&[1.0; 20], 0.95).unwrap(), 19);
        assert_eq!(intrinsic_dimension(&[0.3; 20], 0.95).unwrap(), 19);
        assert_eq!(intrinsic_dimension(&[2.0, 0.0], 0.95).unwrap(), 1);
        assert_eq!(intrinsic_dimension(&[1.0; 4], 1.0).unwrap(), 4);
    }

    #[test]
    fn bad_tau_and_order_are_rejected() {
        assert!(intrinsic_dimension(&[1.0], 0.0).is_err());
        assert!(intrinsic_dimension(&[1.0], 1.5).is_err());
        assert!(intrinsic_dimension(&[1.0, 2.0], 0.5).is_err());
        assert!(intrinsic_dimension(&[1.0, -1.0], 0.5).is_err());
    }

    #[test]
    fn curvature_cases() {
        let corner = array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        assert_relative_eq!(
            curvature(corner.view()).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-12
        );
        let line = Array2::from_shape_fn((7, 3), |(t, j)| t as f64 * (j as f64 + 0.5) - 1.0);
        assert!(curvature(line.view()).unwrap() <= 1e-12);
        assert!(curvature(Array2::<f64>::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn selectivity_cases() {
        let p = [0.0, 0.1, 0.2, 0.3, 0.4];
        let x = Array2::from_shape_fn((5, 3), |(i, j)| match j {
            0 => p[i],
            1 => 0.1,
            _ => -3.0 * p[i] + 2.0,
        });
        let (rho, s) = selectivity(x.view(), &p).unwrap();
        assert_relative_eq!(rho[0], 1.0, epsilon = 1e-12);
        assert_eq!(rho[1], 0.0);
        assert_relative_eq!(rho[2], -1.0, epsilon = 1e-12);
        assert_relative_eq!(s, 2.0 / 3.0, epsilon = 1e-12);
        assert!(selectivity(x.view(), &[0.2; 5]).is_err());
        assert!(selectivity(x.view(), &p[..4]).is_err());
    }

    fn trajectory() -> impl Strategy<Value = Array2<f64>> {
        (3usize..10, 1usize..6).prop_flat_map(|(t, d)| {
            proptest::collection::vec(-10.0f64..10.0, t * d)
                .prop_map(move |v| Array2::from_shape_vec((t, d), v).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn curvature_is_translation_invariant(traj in trajectory(), shift in -50.0f64..50.0) {
            let c0 = curvature(traj.view()).unwrap();
            let c1 = curvature((&traj + shift).view()).unwrap();
            prop_assert!((c0 - c1).abs() <= 1e-9 * (1.0 + c0));
        }

        #[test]
        fn curvature_is_absolutely_homogeneous(traj in trajectory(), a in -5.0f64..5.0) {
            let c0 = curvature(traj.view()).unwrap();
            let c1 = curvature((&traj * a).view()).unwrap();
            prop_assert!((c1 - a.abs() * c0).abs() <= 1e-9 * (1e-12 + a.abs() * c0));
        }

        #[test]
        fn intrinsic_dimension_grows_with_tau(
            mut eigs in proptest::collection::vec(0.0f64..5.0, 1..12),
            t1 in 0.01f64..1.0,
            t2 in 0.01f64..1.0,
        ) {
            eigs.sort_by(|a, b| b.total_cmp(a));
            prop_assume!(eigs[0] > 0.0);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(intrinsic_dimension(&eigs, lo).unwrap() <= intrinsic_dimension(&eigs, hi).unwrap());
        }

        #[test]
        fn spectrum_is_rotation_invariant(seed in any::<u64>(), n in 3usize..12, m in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, n, m);
            let q = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0)).qr().q();
            let q = Array2::from_shape_fn((m, m), |(i, j)| q[(i, j)]);
            let e0 = pca_eigenvalues(x.view()).unwrap();
            let e1 = pca_eigenvalues(x.dot(&q).view()).unwrap();
            let scale = e0[0].max(1e-300);
            for (a, b) in e0.iter().zip(&e1) {
                prop_assert!((a - b).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn rho_respects_affine_maps(
            seed in any::<u64>(),
            slope in prop_oneof![-4.0f64..-0.1, 0.1f64..4.0],
            offset in -3.0f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, 20, 4);
            let p: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
            let (r0, s0) = selectivity(x.view(), &p).unwrap();
            let (r1, s1) = selectivity((&x * slope + offset).view(), &p).unwrap();
            for (a, b) in r0.iter().zip(r1.iter()) {
                prop_assert!((a * slope.signum() - b).abs() <= 1e-12);
            }
            prop_assert!((s0 - s1).abs() <= 1e-12);
        }
    }
}
