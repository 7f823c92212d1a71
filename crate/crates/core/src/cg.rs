use nalgebra::{DMatrix, DVector};

use crate::error::{check_rows, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A X = B` column by column for a symmetric positive definite
/// operator given as a matrix-vector product, to relative residual `tol`.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    b: &DMatrix<f64>,
    x0: Option<&DMatrix<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, CgReport)> {
    let mut x = match x0 {
        Some(x0) => {
            check_rows(b.nrows(), x0.nrows())?;
            x0.clone()
        }
        None => DMatrix::zeros(b.nrows(), b.ncols()),
    };
    let mut report = CgReport { iterations: 0, residual: 0.0 };
    for j in 0..b.ncols() {
        let rhs = b.column(j).into_owned();
        let b_norm = rhs.norm();
        if b_norm == 0.0 {
            x.column_mut(j).fill(0.0);
            continue;
        }
        let mut xj = x.column(j).into_owned();
        let mut r = &rhs - apply(&xj)?;
        let mut p = r.clone();
        let mut rr = r.norm_squared();
        let mut it = 0;
        while rr.sqrt() > tol * b_norm {
            if it == max_iter {
                return Err(Error::CgNotConverged { iterations: it, residual: rr.sqrt() / b_norm });
            }
            let ap = apply(&p)?;
            let alpha = rr / p.dot(&ap);
            xj.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &ap, 1.0);
            let rr_next = r.norm_squared();
            p = &r + &p * (rr_next / rr);
            rr = rr_next;
            it += 1;
        }
        x.set_column(j, &xj);
        report.iterations = report.iterations.max(it);
        report.residual = report.residual.max(rr.sqrt() / b_norm);
    }
    Ok((x, report))
}
