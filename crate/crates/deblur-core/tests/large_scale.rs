//! Opt-in full-scale check of the wide-kernel convolution path. The
//! routine suite stays at desk scale (kernels <= 63); this exercises the
//! 701-wide kernel once. Run with:
//!
//! ```text
//! cargo test -p deblur-core --test large_scale -- --ignored
//! ```

use deblur_core::convolution::{convolve, Kernel};
use deblur_core::image::{BoundaryCondition, Image};
use deblur_core::rng_from_seed;
use rand::Rng;

#[test]
#[ignore]
fn kernel_701_fft_path_matches_direct_samples() {
    let mut rng = rng_from_seed(701);
    let m = 256;
    let n = 256;
    let image = Image::new(m, n, (0..m * n).map(|_| rng.gen::<f64>()).collect()).unwrap();
    let kernel = Kernel::gaussian(701, 90.0).unwrap();
    let boundary = BoundaryCondition::Reflexive;

    let out = convolve(&image, &kernel, boundary);

    // Spot-check the padded-FFT result against the direct sum at a few
    // pixels; each direct evaluation touches all 491401 weights.
    let r = kernel.radius() as isize;
    for _ in 0..5 {
        let i = rng.gen_range(0..m) as isize;
        let j = rng.gen_range(0..n) as isize;
        let mut acc = 0.0;
        for h in -r..=r {
            for l in -r..=r {
                acc += kernel.get((h + r) as usize, (l + r) as usize)
                    * image.get_bounded(i + h, j + l, boundary);
            }
        }
        let got = out.get(i as usize, j as usize);
        assert!(
            (got - acc).abs() < 1e-8,
            "pixel ({i},{j}): fft path {got} vs direct {acc}"
        );
    }

    // DC gain: a constant image maps to weight_sum * c exactly under the
    // reflexive embedding.
    let constant = Image::filled(m, n, 0.37);
    let out = convolve(&constant, &kernel, boundary);
    let expected = kernel.weight_sum() * 0.37;
    for &v in out.pixels() {
        assert!((v - expected).abs() < 1e-8);
    }
}
