use nalgebra::{DMatrix, Dyn, SVD};

/// Default relative cutoff for small singular values.
pub const DEFAULT_RCOND: f64 = 1e-10;

// Convergence thresholds tried in turn. nalgebra's bidiagonal QR can stop
// with an inaccurate factorization on exactly rank-deficient input at the
// default threshold, so each factorization is checked before it is used.
const SVD_EPS: [f64; 4] = [f64::EPSILON, 1e-12, 1e-20, 1e-10];
const SVD_MAX_ITER: usize = 10_000;

/// SVD whose reconstruction error is at most `1e-12 * max|m|`, or the most
/// accurate one found.
fn checked_svd(m: &DMatrix<f64>) -> SVD<f64, Dyn, Dyn> {
    let scale = m.amax();
    let mut best: Option<(f64, SVD<f64, Dyn, Dyn>)> = None;
    for eps in SVD_EPS {
        let Some(svd) = SVD::try_new(m.clone(), true, true, eps, SVD_MAX_ITER) else { continue };
        let err = match svd.clone().recompose() {
            Ok(r) => (r - m).amax(),
            Err(_) => f64::INFINITY,
        };
        if err <= 1e-12 * scale {
            return svd;
        }
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, svd));
        }
    }
    match best {
        Some((_, svd)) => svd,
        None => m.clone().svd(true, true),
    }
}

/// Moore-Penrose pseudoinverse by SVD, dropping singular values below
/// `rcond * sigma_max`. The zero matrix maps to the zero matrix.
pub fn pinv(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 || m.amax() == 0.0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = checked_svd(m);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 || !sigma_max.is_finite() {
        return DMatrix::zeros(cols, rows);
    }
    let cutoff = rcond * sigma_max;
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut out = DMatrix::zeros(cols, rows);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            // out += v_i u_i' / s
            out.ger(1.0 / s, &v_t.row(i).transpose(), &u.column(i), 1.0);
        }
    }
    out
}
