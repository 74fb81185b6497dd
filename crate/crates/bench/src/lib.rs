//! Fixtures shared by the benchmarks: scenario samples and the histogram
//! pairs built from them.

use infoleak_core::histogram::{build_histogram, joint_range};
use infoleak_core::scenarios::{sample_joint, sample_product_of_marginals};
use infoleak_core::{HistogramGrid, SampleMatrix, ScenarioKind, ScenarioSpec};

/// Joint and product-of-marginals samples of the standard scenario.
pub fn scenario_samples(kind: ScenarioKind, n: usize, seed: u64) -> (SampleMatrix, SampleMatrix) {
    let spec = ScenarioSpec::standard(kind, seed);
    let joint = sample_joint(&spec, n).expect("valid sample count");
    let product = sample_product_of_marginals(&spec, n).expect("valid sample count");
    (joint, product)
}

/// Histograms of both sample sets on their shared `k`-per-dimension grid.
pub fn scenario_histograms(
    kind: ScenarioKind,
    n: usize,
    k: usize,
    seed: u64,
) -> (HistogramGrid, HistogramGrid) {
    let (joint, product) = scenario_samples(kind, n, seed);
    let range = joint_range(&joint, &product).expect("finite samples");
    (
        build_histogram(&joint, k, &range).expect("grid within budget"),
        build_histogram(&product, k, &range).expect("grid within budget"),
    )
}
