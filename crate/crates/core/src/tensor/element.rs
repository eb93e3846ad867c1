use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Floating-point scalar usable in tensors: `f32` for training and inference,
/// `f64` for gradient checking.
pub trait Element: Float + Default + Debug + Sum + Send + Sync + 'static {
    fn cast_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers, where
    /// `op(a)` is `m x k` stored transposed when `trans_a` is set.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        beta: Self,
        c: &mut [Self],
    );
}

fn strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    // logical (rows x cols); physical storage is (cols x rows) when transposed
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_element {
    ($t:ty, $gemm:path) => {
        impl Element for $t {
            #[inline]
            fn cast_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                trans_a: bool,
                b: &[Self],
                trans_b: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(m, k, trans_a);
                let (rsb, csb) = strides(k, n, trans_b);
                // SAFETY: the buffer lengths were checked above against the
                // logical extents and the strides address exactly those extents.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_element!(f32, matrixmultiply::sgemm);
impl_element!(f64, matrixmultiply::dgemm);
