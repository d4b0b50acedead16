use super::csc::{inf_norm, CscMatrix};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;

/// Ruiz equilibration of the KKT matrix `[P A^T; A 0]` plus a cost scaling.
///
/// The scaled problem is `P' = c D P D`, `q' = c D q`, `A' = E A D`,
/// `l' = E l`, `u' = E u`.
#[derive(Debug, Clone)]
pub struct Scaling {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub c: f64,
}

fn clip(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

impl Scaling {
    pub fn identity(n: usize, m: usize) -> Self {
        Scaling { d: vec![1.0; n], e: vec![1.0; m], c: 1.0 }
    }

    /// Scales `p`, `q` and `a` in place and returns the accumulated factors.
    pub fn equilibrate(p: &mut CscMatrix, q: &mut [f64], a: &mut CscMatrix, iterations: usize) -> Self {
        let n = p.ncols;
        let m = a.nrows;
        let mut s = Scaling::identity(n, m);
        for _ in 0..iterations {
            let p_norms = p.sym_upper_col_inf_norms();
            let a_cols = a.col_inf_norms();
            let a_rows = a.row_inf_norms();
            let dd: Vec<f64> = (0..n).map(|j| 1.0 / clip(p_norms[j].max(a_cols[j])).sqrt()).collect();
            let de: Vec<f64> = a_rows.iter().map(|&r| 1.0 / clip(r).sqrt()).collect();
            p.scale(&dd, &dd);
            a.scale(&de, &dd);
            for (qj, dj) in q.iter_mut().zip(&dd) {
                *qj *= dj;
            }
            for (sd, dj) in s.d.iter_mut().zip(&dd) {
                *sd *= dj;
            }
            for (se, ei) in s.e.iter_mut().zip(&de) {
                *se *= ei;
            }

            let p_norms = p.sym_upper_col_inf_norms();
            let mean = if n > 0 { p_norms.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let cost = 1.0 / clip(mean.max(inf_norm(q)));
            p.scale_all(cost);
            q.iter_mut().for_each(|v| *v *= cost);
            s.c *= cost;
        }
        s
    }

    pub fn scale_bounds(&self, l: &mut [f64], u: &mut [f64]) {
        for ((li, ui), ei) in l.iter_mut().zip(u.iter_mut()).zip(&self.e) {
            if li.is_finite() {
                *li *= ei;
            }
            if ui.is_finite() {
                *ui *= ei;
            }
        }
    }

    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(v, d)| v * d).collect()
    }

    pub fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.e).map(|(v, e)| v * e / self.c).collect()
    }
}
