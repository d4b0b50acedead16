//! Active-set polishing of an ADMM iterate.

use super::csc::CscMatrix;
use super::ldl::LdlFactor;
use super::{is_equality, Workspace};

#[derive(Clone, Copy, PartialEq)]
enum Active {
    Equal,
    Lower,
    Upper,
}

/// Passes of the drop-wrong-sign / add-violated correction.
const MAX_PASSES: usize = 25;

/// Returns polished scaled iterates `(x, z, y)`, or `None` when the reduced
/// system cannot be factored or no consistent active set was found.
///
/// The active set is guessed from the ADMM iterate, then corrected: rows whose
/// multipliers have the wrong sign are released and violated rows are added.
pub(super) fn polish(ws: &Workspace<'_>) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = ws.m;
    let mut active: Vec<Option<Active>> = (0..m)
        .map(|i| {
            let (l, u, z, y) = (ws.l[i], ws.u[i], ws.z[i], ws.y[i]);
            if is_equality(l, u) {
                Some(Active::Equal)
            } else if l.is_finite() && z - l < -y {
                Some(Active::Lower)
            } else if u.is_finite() && u - z < y {
                Some(Active::Upper)
            } else {
                None
            }
        })
        .collect();

    for _ in 0..MAX_PASSES {
        let (x, y) = solve_reduced(ws, &active)?;
        let mut changed = false;
        for i in 0..m {
            let tol = 1e-8 * (1.0 + y[i].abs());
            match active[i] {
                Some(Active::Lower) if y[i] > tol => {
                    active[i] = None;
                    changed = true;
                }
                Some(Active::Upper) if y[i] < -tol => {
                    active[i] = None;
                    changed = true;
                }
                _ => {}
            }
        }
        let mut ax = vec![0.0; m];
        ws.a.mul_vec(&x, &mut ax);
        if !changed {
            for i in 0..m {
                if active[i].is_some() {
                    continue;
                }
                if ax[i] < ws.l[i] - 1e-9 * (1.0 + ws.l[i].abs()) {
                    active[i] = Some(Active::Lower);
                    changed = true;
                } else if ax[i] > ws.u[i] + 1e-9 * (1.0 + ws.u[i].abs()) {
                    active[i] = Some(Active::Upper);
                    changed = true;
                }
            }
        }
        if !changed {
            let z = (0..m).map(|i| ax[i].clamp(ws.l[i], ws.u[i])).collect();
            return Some((x, z, y));
        }
    }
    None
}

/// Solves the equality-constrained problem on the active rows.
fn solve_reduced(ws: &Workspace<'_>, active: &[Option<Active>]) -> Option<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (ws.n, ws.m);
    let mut rows = Vec::new();
    let mut rhs_b = Vec::new();
    for (i, a) in active.iter().enumerate() {
        match a {
            Some(Active::Equal) | Some(Active::Lower) => {
                rows.push(i);
                rhs_b.push(ws.l[i]);
            }
            Some(Active::Upper) => {
                rows.push(i);
                rhs_b.push(ws.u[i]);
            }
            None => {}
        }
    }
    let a_red = ws.a.select_rows(&rows);
    let k = rows.len();
    let delta = ws.settings.polish_delta;

    let mut exact: Vec<(usize, usize, f64)> = ws.p.triplets().collect();
    exact.extend(a_red.triplets().map(|(r, c, v)| (c, n + r, v)));
    let mut regularized = exact.clone();
    regularized.extend((0..n).map(|j| (j, j, delta)));
    regularized.extend((0..k).map(|i| (n + i, n + i, -delta)));
    let k_exact = CscMatrix::from_triplets(n + k, n + k, exact);
    let k_reg = CscMatrix::from_triplets(n + k, n + k, regularized);
    let factor = LdlFactor::new(&k_reg).ok()?;

    let mut rhs: Vec<f64> = ws.q.iter().map(|v| -v).collect();
    rhs.extend_from_slice(&rhs_b);
    let mut sol = rhs.clone();
    factor.solve(&mut sol);

    let mut kx = vec![0.0; n + k];
    for _ in 0..ws.settings.polish_refine_iterations {
        k_exact.sym_upper_mul_vec(&sol, &mut kx);
        let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, v)| b - v).collect();
        factor.solve(&mut r);
        for (s, d) in sol.iter_mut().zip(&r) {
            *s += d;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut y = vec![0.0; m];
    for (idx, &row) in rows.iter().enumerate() {
        y[row] = sol[n + idx];
    }
    Some((sol[..n].to_vec(), y))
}
