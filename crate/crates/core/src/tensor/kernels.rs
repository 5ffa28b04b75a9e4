//! Raw row-major matrix kernels shared by the tensor ops and the layers.
//!
//! Shapes are passed explicitly; callers guarantee slice lengths.

/// `out[m×n] = a[m×k] · b[k×n]`.
pub fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    gemm_into(a, b, m, k, n, &mut out);
    out
}

/// `out[m×n] += a[m×k] · b[k×n]`.
pub fn gemm_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · d[m×n]`.
pub fn gemm_tn_into(a: &[f64], d: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert!(a.len() >= m * k && d.len() >= m * n && out.len() >= k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let drow = &d[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &dv) in orow.iter_mut().zip(drow) {
                *o += av * dv;
            }
        }
    }
}

/// `out[m×k] = d[m×n] · b[k×n]ᵀ`.
pub fn gemm_nt(d: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let drow = &d[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            *o = drow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Column sums of `d[m×n]` accumulated into `out[n]`.
pub fn col_sum_into(d: &[f64], m: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        for (o, &v) in out.iter_mut().zip(&d[i * n..(i + 1) * n]) {
            *o += v;
        }
    }
}
