//! Bounds-checked wrappers over the `matrixmultiply` kernels.

fn check_view(len: usize, rows: usize, cols: usize, rs: isize, cs: isize, what: &str) {
    assert!(rs >= 0 && cs >= 0, "{what}: negative strides unsupported");
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * rs as usize + (cols - 1) * cs as usize;
    assert!(last < len, "{what}: view exceeds buffer ({last} >= {len})");
}

macro_rules! gemm_impl {
    ($name:ident, $t:ty, $kernel:path) => {
        pub(super) fn $name(
            m: usize,
            k: usize,
            n: usize,
            a: (&[$t], isize, isize),
            b: (&[$t], isize, isize),
            c: (&mut [$t], isize, isize),
            accumulate: bool,
        ) {
            check_view(a.0.len(), m, k, a.1, a.2, "gemm lhs");
            check_view(b.0.len(), k, n, b.1, b.2, "gemm rhs");
            check_view(c.0.len(), m, n, c.1, c.2, "gemm out");
            if m == 0 || n == 0 {
                return;
            }
            let beta = if accumulate { 1.0 } else { 0.0 };
            // SAFETY: every index reachable through the strided views was checked above.
            unsafe {
                $kernel(
                    m,
                    k,
                    n,
                    1.0,
                    a.0.as_ptr(),
                    a.1,
                    a.2,
                    b.0.as_ptr(),
                    b.1,
                    b.2,
                    beta,
                    c.0.as_mut_ptr(),
                    c.1,
                    c.2,
                );
            }
        }
    };
}

gemm_impl!(sgemm, f32, matrixmultiply::sgemm);
gemm_impl!(dgemm, f64, matrixmultiply::dgemm);
