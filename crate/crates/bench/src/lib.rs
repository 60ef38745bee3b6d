//! Shared fixtures for the criterion benchmarks.

use redpsm_core::image::DynamicObject;
use redpsm_core::phantom::{acquire, bit_reversed_angles, shepp_logan, warp_phantom};
use redpsm_core::tomo::Sinogram;

/// Warped phantom plus its noisy time-sequential sinogram.
pub fn bench_instance(n: usize, p: usize) -> (DynamicObject, Sinogram) {
    let truth = warp_phantom(&shepp_logan(n), p, 0.05 * n as f64).expect("phantom");
    let sched = bit_reversed_angles(p, p).expect("schedule");
    let g = acquire(&truth, &sched, 5e-3, 7).expect("acquisition");
    (truth, g)
}
