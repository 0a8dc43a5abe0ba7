//! Closed-form ridge regression.

use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::float::Float;

/// Solves the normal equations `(Xc' Xc + lambda I) w = Xc' yc` on
/// mean-centered data and recovers the intercept from the means, so the
/// penalty never touches the intercept. Features are used as-is.
pub(crate) fn fit_ridge<F: Float>(instances: &[&Instance<F>], lambda: F) -> Result<(Vec<F>, F)> {
    let n = instances.len();
    let d = instances[0].features.len();
    let nf = F::from_count(n as u64);

    let mut x_mean = vec![F::zero(); d];
    let mut y_mean = F::zero();
    for inst in instances {
        for (j, &x) in inst.features.iter().enumerate() {
            x_mean[j] += x;
        }
        y_mean += inst.label;
    }
    for m in &mut x_mean {
        *m /= nf;
    }
    y_mean /= nf;

    let mut a = vec![F::zero(); d * d];
    let mut b = vec![F::zero(); d];
    for inst in instances {
        let yc = inst.label - y_mean;
        for j in 0..d {
            let xj = inst.features[j] - x_mean[j];
            b[j] += xj * yc;
            for k in j..d {
                a[j * d + k] += xj * (inst.features[k] - x_mean[k]);
            }
        }
    }
    for j in 0..d {
        a[j * d + j] += lambda;
        for k in 0..j {
            a[j * d + k] = a[k * d + j];
        }
    }

    let weights = cholesky_solve(&mut a, b, d)?;
    let mut intercept = y_mean;
    for j in 0..d {
        intercept -= weights[j] * x_mean[j];
    }
    Ok((weights, intercept))
}

/// In-place Cholesky factorization and solve; `a` is SPD for any
/// `lambda > 0`, so no pivoting is needed.
fn cholesky_solve<F: Float>(a: &mut [F], mut b: Vec<F>, d: usize) -> Result<Vec<F>> {
    for j in 0..d {
        for k in 0..=j {
            let mut s = a[j * d + k];
            for m in 0..k {
                s -= a[j * d + m] * a[k * d + m];
            }
            if j == k {
                if s <= F::zero() {
                    return Err(Error::Numerical(
                        "ridge normal equations are not positive definite".to_owned(),
                    ));
                }
                a[j * d + j] = s.sqrt();
            } else {
                a[j * d + k] = s / a[k * d + k];
            }
        }
    }
    for j in 0..d {
        let mut s = b[j];
        for m in 0..j {
            s -= a[j * d + m] * b[m];
        }
        b[j] = s / a[j * d + j];
    }
    for j in (0..d).rev() {
        let mut s = b[j];
        for m in j + 1..d {
            s -= a[m * d + j] * b[m];
        }
        b[j] = s / a[j * d + j];
    }
    Ok(b)
}
