//! Dense continuous Lyapunov solver, `A^T Q + Q A = -G`, by Bartels-Stewart
//! on the real Schur form of `A`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve `A^T Q + Q A = -G` for symmetric `G`. `A` must be Hurwitz.
pub fn solve_continuous(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Lyapunov("real Schur decomposition did not converge".into()))?;
    let (z, mut t) = schur.unpack();

    // Block structure of the quasi-triangular factor.
    let scale = t.amax().max(1.0);
    let mut blocks = Vec::new();
    let mut j = 0;
    while j < n {
        if j + 1 < n && t[(j + 1, j)].abs() > 1e-13 * scale {
            blocks.push((j, 2));
            j += 2;
        } else {
            if j + 1 < n {
                t[(j + 1, j)] = 0.0;
            }
            blocks.push((j, 1));
            j += 1;
        }
    }
    for &(j, s) in &blocks {
        let re = if s == 1 {
            t[(j, j)]
        } else {
            0.5 * (t[(j, j)] + t[(j + 1, j + 1)])
        };
        if re >= -1e-12 * scale {
            return Err(Error::Lyapunov(format!(
                "state matrix is not Hurwitz (eigenvalue real part {re:.3e})"
            )));
        }
    }

    let h = -(z.transpose() * g * &z);
    let tt = t.transpose();
    let mut y = DMatrix::<f64>::zeros(n, n);

    for &(j, s) in &blocks {
        // rhs = H_J - sum_{k < j} Y_k T_{k, J}
        let mut rhs = h.columns(j, s).into_owned();
        if j > 0 {
            rhs -= y.columns(0, j) * t.view((0, j), (j, s));
        }
        if s == 1 {
            let m = &tt + DMatrix::identity(n, n) * t[(j, j)];
            let col = m
                .lu()
                .solve(&rhs.column(0).into_owned())
                .ok_or_else(|| Error::Lyapunov("singular 1x1 block system".into()))?;
            y.set_column(j, &col);
        } else {
            let (t00, t01, t10, t11) = (t[(j, j)], t[(j, j + 1)], t[(j + 1, j)], t[(j + 1, j + 1)]);
            let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(&tt);
            m.view_mut((n, n), (n, n)).copy_from(&tt);
            for i in 0..n {
                m[(i, i)] += t00;
                m[(i, n + i)] += t10;
                m[(n + i, i)] += t01;
                m[(n + i, n + i)] += t11;
            }
            let mut b = DVector::<f64>::zeros(2 * n);
            b.rows_mut(0, n).copy_from(&rhs.column(0));
            b.rows_mut(n, n).copy_from(&rhs.column(1));
            let sol = m
                .lu()
                .solve(&b)
                .ok_or_else(|| Error::Lyapunov("singular 2x2 block system".into()))?;
            y.set_column(j, &sol.rows(0, n).into_owned());
            y.set_column(j + 1, &sol.rows(n, n).into_owned());
        }
    }

    let q = &z * y * z.transpose();
    Ok((&q + q.transpose()) * 0.5)
}
