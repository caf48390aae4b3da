/// Strided view of a row-major-or-not matrix.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f32],
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f32], offset: usize, row_stride: usize, col_stride: usize) -> Self {
        Self {
            data,
            offset,
            row_stride,
            col_stride,
        }
    }

    fn t(self) -> Self {
        Self {
            row_stride: self.col_stride,
            col_stride: self.row_stride,
            ..self
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f32 {
        self.data[self.offset + r * self.row_stride + c * self.col_stride]
    }

    fn check(&self, rows: usize, cols: usize) {
        if rows == 0 || cols == 0 {
            return;
        }
        let last = self.offset + (rows - 1) * self.row_stride + (cols - 1) * self.col_stride;
        assert!(last < self.data.len(), "matrix view out of bounds");
    }
}

/// `c = alpha * a(m×k) * b(k×n) + beta * c(m×n)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: MatRef<'_>,
    b: MatRef<'_>,
    beta: f32,
    c: &mut [f32],
    c_offset: usize,
    c_row_stride: usize,
    c_col_stride: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    a.check(m, k);
    b.check(k, n);
    let last = c_offset + (m - 1) * c_row_stride + (n - 1) * c_col_stride;
    assert!(last < c.len(), "output view out of bounds");
    if k <= SKINNY && c_col_stride == 1 {
        short_k(m, k, n, alpha, a, b, beta, &mut c[c_offset..], c_row_stride);
        return;
    }
    if n <= SKINNY || m <= SKINNY {
        let (m2, n2, a2, b2, rs, cs) = if n <= SKINNY {
            (m, n, a, b, c_row_stride, c_col_stride)
        } else {
            // Cᵀ = Bᵀ Aᵀ turns a short A into a short B.
            (n, m, b.t(), a.t(), c_col_stride, c_row_stride)
        };
        let prod = skinny(m2, k, n2, a2, b2);
        for j in 0..n2 {
            for i in 0..m2 {
                let dst = &mut c[c_offset + i * rs + j * cs];
                let v = alpha * prod[j * m2 + i];
                *dst = if beta == 0.0 { v } else { v + beta * *dst };
            }
        }
        return;
    }
    // SAFETY: every index touched by the kernel lies within the bounds asserted above,
    // and `c` is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr().add(b.offset),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr().add(c_offset),
            c_row_stride as isize,
            c_col_stride as isize,
        );
    }
}

/// Below this many rows or columns, matrixmultiply's packing dominates and
/// the loops in [`skinny`] are faster.
const SKINNY: usize = 40;

/// `(a · b)ᵀ` as an `n × m` row-major buffer, for small `n`. Reads `a` once.
fn skinny(m: usize, k: usize, n: usize, a: MatRef<'_>, b: MatRef<'_>) -> Vec<f32> {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { skinny_avx2(m, k, n, a, b) };
        }
    }
    skinny_body(m, k, n, a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn skinny_avx2(m: usize, k: usize, n: usize, a: MatRef<'_>, b: MatRef<'_>) -> Vec<f32> {
    skinny_body(m, k, n, a, b)
}

#[inline(always)]
fn skinny_body(m: usize, k: usize, n: usize, a: MatRef<'_>, b: MatRef<'_>) -> Vec<f32> {
    let mut out = vec![0.0f32; n * m];
    if a.col_stride == 1 {
        let mut bt = vec![0.0f32; n * k];
        for j in 0..n {
            for l in 0..k {
                bt[j * k + l] = b.at(l, j);
            }
        }
        for i in 0..m {
            let row = &a.data[a.offset + i * a.row_stride..][..k];
            for j in 0..n {
                out[j * m + i] = dot(row, &bt[j * k..(j + 1) * k]);
            }
        }
    } else {
        let mut col = vec![0.0f32; m];
        for l in 0..k {
            let column: &[f32] = if a.row_stride == 1 {
                &a.data[a.offset + l * a.col_stride..][..m]
            } else {
                for (i, v) in col.iter_mut().enumerate() {
                    *v = a.at(i, l);
                }
                &col
            };
            for j in 0..n {
                let s = b.at(l, j);
                if s != 0.0 {
                    axpy(s, column, &mut out[j * m..(j + 1) * m]);
                }
            }
        }
    }
    out
}

/// Rank-`k` update for small `k`, row by row of `c`.
#[allow(clippy::too_many_arguments)]
fn short_k(m: usize, k: usize, n: usize, alpha: f32, a: MatRef<'_>, b: MatRef<'_>, beta: f32, c: &mut [f32], c_row_stride: usize) {
    let mut rows = vec![0.0f32; k * n];
    for l in 0..k {
        for j in 0..n {
            rows[l * n + j] = b.at(l, j);
        }
    }
    let body = |c: &mut [f32]| {
        for i in 0..m {
            let crow = &mut c[i * c_row_stride..][..n];
            if beta == 0.0 {
                crow.fill(0.0);
            } else if beta != 1.0 {
                crow.iter_mut().for_each(|v| *v *= beta);
            }
            for l in 0..k {
                let s = alpha * a.at(i, l);
                if s != 0.0 {
                    axpy(s, &rows[l * n..(l + 1) * n], crow);
                }
            }
        }
    };
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            #[target_feature(enable = "avx2,fma")]
            unsafe fn run(f: impl FnOnce()) {
                f()
            }
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { run(|| body(c)) };
            return;
        }
    }
    body(c)
}

#[inline(always)]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    const L: usize = 32;
    let mut acc = [0.0f32; L];
    let (ac, bc) = (a.chunks_exact(L), b.chunks_exact(L));
    let tail: f32 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for i in 0..L {
            acc[i] = x[i].mul_add(y[i], acc[i]);
        }
    }
    acc.iter().sum::<f32>() + tail
}

#[inline(always)]
fn axpy(s: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = s.mul_add(*xi, *yi);
    }
}
