use std::time::Instant;

// Compare GEMM orientations for the conv shapes that dominate runtime.
// C[m x n] = A[m x k] * B[k x n] where m = out_ch, k = ckk, n = HW,
// versus the transposed orientation with m' = HW.
#[test]
#[ignore]
fn gemm_orientations() {
    for (out_ch, ckk, hw, label) in [
        (16usize, 288usize, 16384usize, "32->16@128"),
        (16, 144, 16384, "16->16@128"),
        (32, 288, 4096, "32->32@64"),
        (256, 2304, 64, "256->256@8"),
    ] {
        let w = vec![0.01f64; out_ch * ckk];
        let col = vec![0.5f64; ckk * hw];
        let mut y = vec![0.0f64; out_ch * hw];
        let reps = 8;
        let t0 = Instant::now();
        for _ in 0..reps {
            unsafe {
                matrixmultiply::dgemm(
                    out_ch, ckk, hw, 1.0,
                    w.as_ptr(), ckk as isize, 1,
                    col.as_ptr(), hw as isize, 1,
                    0.0, y.as_mut_ptr(), hw as isize, 1,
                );
            }
        }
        let a = t0.elapsed() / reps;
        let t1 = Instant::now();
        for _ in 0..reps {
            unsafe {
                // y^T[hw x out_ch] = col^T[hw x ckk] * w^T[ckk x out_ch]
                matrixmultiply::dgemm(
                    hw, ckk, out_ch, 1.0,
                    col.as_ptr(), 1, hw as isize,
                    w.as_ptr(), 1, ckk as isize,
                    0.0, y.as_mut_ptr(), 1, hw as isize,
                );
            }
        }
        let b = t1.elapsed() / reps;
        let flops = (2 * out_ch * ckk * hw) as f64;
        println!(
            "{label}: normal {a:?} ({:.1} GF/s) transposed {b:?} ({:.1} GF/s)",
            flops / a.as_secs_f64() / 1e9,
            flops / b.as_secs_f64() / 1e9
        );
    }
}
