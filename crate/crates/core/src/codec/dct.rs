use std::f64::consts::PI;
use std::sync::OnceLock;

/// An 8x8 block, row-major.
pub type Block = [f64; 64];

fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (u, row) in c.iter_mut().enumerate() {
            let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (((2 * x + 1) as f64 * u as f64 * PI) / 16.0).cos();
            }
        }
        c
    })
}

/// Orthonormal type-II 2-D DCT: `C X C^T`.
pub fn block_dct8(block: &Block) -> Block {
    let c = basis();
    let mut tmp = [0.0; 64];
    for u in 0..8 {
        for x in 0..8 {
            tmp[u * 8 + x] = (0..8).map(|y| c[u][y] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            out[u * 8 + v] = (0..8).map(|x| tmp[u * 8 + x] * c[v][x]).sum();
        }
    }
    out
}

/// Inverse of [`block_dct8`]: `C^T F C`.
pub fn block_idct8(coeffs: &Block) -> Block {
    let c = basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for v in 0..8 {
            tmp[y * 8 + v] = (0..8).map(|u| c[u][y] * coeffs[u * 8 + v]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| tmp[y * 8 + v] * c[v][x]).sum();
        }
    }
    out
}
