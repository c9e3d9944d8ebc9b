use std::f64::consts::TAU;

use super::PointSet;
use crate::error::{invalid, Error, Result};

/// Default multiplicative constant of the exponential-sum bound. `3^m` is a rigorous choice.
pub const DEFAULT_ETK_CONSTANT: f64 = 4.0;

/// `max over c ≤ d of (S[d] - S[c-1]) / n - w (y[d] - y[c])` for sorted distinct `y` with
/// inclusive prefix counts `s`. Closed boxes `[y_c, y_d]`.
fn closed_kernel(y: &[f64], s: &[usize], w: f64, n: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut run_min = f64::INFINITY;
    for d in 0..y.len() {
        let before = if d == 0 { 0 } else { s[d - 1] };
        run_min = run_min.min(before as f64 / n - w * y[d]);
        best = best.max(s[d] as f64 / n - w * y[d] - run_min);
    }
    best
}

/// `max over c < d of w (y[d] - y[c]) - #{c < k < d} / n` where `y` includes the endpoints
/// `±1/2` and `s[k]` counts interior values `≤ y[k]`. Open boxes `(y_c, y_d)`.
fn open_kernel(y: &[f64], s: &[usize], w: f64, n: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut run_min = f64::INFINITY;
    for d in 0..y.len() {
        if d > 0 {
            let between = s[d - 1];
            best = best.max(w * y[d] - between as f64 / n - run_min);
        }
        run_min = run_min.min(w * y[d] - s[d] as f64 / n);
    }
    best
}

/// Distinct sorted values and inclusive prefix counts.
fn collapse(sorted: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut y = Vec::with_capacity(sorted.len());
    let mut s = Vec::with_capacity(sorted.len());
    for (k, &v) in sorted.iter().enumerate() {
        if y.last() == Some(&v) {
            *s.last_mut().unwrap() = k + 1;
        } else {
            y.push(v);
            s.push(k + 1);
        }
    }
    (y, s)
}

/// Endpoint-extended values for the open kernel: `-1/2, interior distinct values, 1/2`,
/// with counts of values `≤` each.
fn extend_open(sorted: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (y, s) = collapse(sorted);
    let mut ye = Vec::with_capacity(y.len() + 2);
    let mut se = Vec::with_capacity(y.len() + 2);
    let lows = if y.first() == Some(&-0.5) { s[0] } else { 0 };
    ye.push(-0.5);
    se.push(lows);
    for (v, c) in y.iter().zip(&s) {
        if *v > -0.5 && *v < 0.5 {
            ye.push(*v);
            se.push(*c);
        }
    }
    ye.push(0.5);
    se.push(sorted.len());
    (ye, se)
}

fn discrepancy_1d(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let (y, s) = collapse(xs);
    let (ye, se) = extend_open(xs);
    closed_kernel(&y, &s, 1.0, n).max(open_kernel(&ye, &se, 1.0, n))
}

fn insert_sorted(v: &mut Vec<f64>, y: f64) {
    let pos = v.partition_point(|&e| e <= y);
    v.insert(pos, y);
}

fn discrepancy_2d(p: &PointSet) -> f64 {
    let n = p.len() as f64;
    let mut pts: Vec<(f64, f64)> = p.iter().map(|q| (q[0], q[1])).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // Group starts for each distinct x.
    let mut xs = Vec::new();
    let mut starts = Vec::new();
    for (k, q) in pts.iter().enumerate() {
        if xs.last() != Some(&q.0) {
            xs.push(q.0);
            starts.push(k);
        }
    }
    starts.push(pts.len());
    let groups = xs.len();

    let mut best = 0.0_f64;
    let mut strip = Vec::with_capacity(pts.len());

    // Closed boxes [x_a, x_b] x [y_c, y_d].
    for a in 0..groups {
        strip.clear();
        for b in a..groups {
            for q in &pts[starts[b]..starts[b + 1]] {
                insert_sorted(&mut strip, q.1);
            }
            let (y, s) = collapse(&strip);
            best = best.max(closed_kernel(&y, &s, xs[b] - xs[a], n));
        }
    }

    // Open boxes (x'_a, x'_b) x (y'_c, y'_d) over endpoint-extended x values.
    let mut xe = vec![-0.5];
    let mut ge = vec![(0usize, 0usize)];
    for g in 0..groups {
        if xs[g] > -0.5 && xs[g] < 0.5 {
            xe.push(xs[g]);
            ge.push((starts[g], starts[g + 1]));
        }
    }
    xe.push(0.5);
    for a in 0..xe.len() {
        strip.clear();
        for b in a + 1..xe.len() {
            if b > a + 1 {
                let (lo, hi) = ge[b - 1];
                for q in &pts[lo..hi] {
                    insert_sorted(&mut strip, q.1);
                }
            }
            let (y, s) = extend_open(&strip);
            best = best.max(open_kernel(&y, &s, xe[b] - xe[a], n));
        }
    }
    best
}

/// `D_N(P) = sup over axis-parallel boxes B ⊂ [-1/2, 1/2]^m of |#(P ∩ B)/N - |B||`, exact for
/// `m ≤ 2`.
///
/// The supremum is taken over closed boxes with faces through point coordinates (count
/// excess) and over open boxes with faces through point coordinates or the cube boundary
/// (volume excess). The 2D sweep costs `O(N^3)` in the worst case and far less when
/// points share coordinates.
pub fn discrepancy_exact(p: &PointSet) -> Result<f64> {
    if p.is_empty() {
        return invalid("discrepancy of an empty point set");
    }
    match p.dim() {
        1 => {
            let mut xs: Vec<f64> = p.iter().map(|q| q[0]).collect();
            Ok(discrepancy_1d(&mut xs))
        }
        2 => Ok(discrepancy_2d(p)),
        m => Err(Error::Unsupported(format!(
            "exact discrepancy in dimension {m}; use etk_bound"
        ))),
    }
}

/// Exponential-sum bound with the default constant.
pub fn etk_bound(p: &PointSet, h: usize) -> Result<f64> {
    etk_bound_with(p, h, DEFAULT_ETK_CONSTANT)
}

/// `C (1/H + Σ_{0<‖n‖∞≤H} |N⁻¹ Σ_x e^{2πi n·x}| / Π_k (1+|n_k|))`.
pub fn etk_bound_with(p: &PointSet, h: usize, c: f64) -> Result<f64> {
    if h == 0 {
        return invalid("H must be at least 1");
    }
    if p.is_empty() {
        return invalid("bound of an empty point set");
    }
    let m = p.dim();
    let n = p.len();
    let hi = h as i64;
    // Powers e^{2πi k x_j} for k = 0..=H, per point and coordinate.
    let width = h + 1;
    let mut pw = vec![(0.0, 0.0); n * m * width];
    for (i, q) in p.iter().enumerate() {
        for (j, &x) in q.iter().enumerate() {
            for k in 0..width {
                let (s, co) = (TAU * k as f64 * x).sin_cos();
                pw[(i * m + j) * width + k] = (co, s);
            }
        }
    }
    let power = |i: usize, j: usize, k: i64| {
        let (re, im) = pw[(i * m + j) * width + k.unsigned_abs() as usize];
        if k < 0 {
            (re, -im)
        } else {
            (re, im)
        }
    };
    let mut sum = 0.0;
    let mut nv = vec![-hi; m];
    loop {
        // Half of the lattice: S_{-n} is the conjugate of S_n.
        if let Some(&first) = nv.iter().find(|&&v| v != 0) {
            if first > 0 {
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..n {
                    let (mut a, mut b) = (1.0, 0.0);
                    for (j, &k) in nv.iter().enumerate() {
                        if k != 0 {
                            let (c2, s2) = power(i, j, k);
                            (a, b) = (a * c2 - b * s2, a * s2 + b * c2);
                        }
                    }
                    re += a;
                    im += b;
                }
                let weight: f64 = nv.iter().map(|&k| 1.0 + k.unsigned_abs() as f64).product();
                sum += 2.0 * (re.hypot(im) / n as f64) / weight;
            }
        }
        let mut carry = true;
        for k in (0..m).rev() {
            if nv[k] < hi {
                nv[k] += 1;
                carry = false;
                break;
            }
            nv[k] = -hi;
        }
        if carry {
            break;
        }
    }
    Ok(c * (1.0 / h as f64 + sum))
}
