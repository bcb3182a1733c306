//! Shared fixtures for the criterion benchmarks.

use cubetop_core::imagio::ImageFrame;
use cubetop_core::rng::SplitMix64;

/// Random u16-valued frame, reproducible by seed.
pub fn random_u16_frame(width: usize, height: usize, seed: u64) -> ImageFrame {
    let mut rng = SplitMix64::new(seed);
    ImageFrame::from_fn(width, height, |_, _| (rng.next() % 65536) as f64)
}

/// Shot-noise frame around a flat rate, reproducible by seed.
pub fn poisson_frame(width: usize, height: usize, lambda: f64, seed: u64) -> ImageFrame {
    let model = cubetop_core::stats::NullModel::poisson(lambda, width, height, seed)
        .expect("valid lambda");
    cubetop_core::stats::generate_null_image(&model, 0)
}
