//! Workloads shared by the benchmarks.

use mixsem::data::{encode_with_centering, simulate, Centering, CovariateSource, SchemaConfig};
use mixsem::model::{BinaryEqParams, GaussianEqParams, LatentStructure, OrdinalEqParams};
use mixsem::{Dataset, ModelSpec, ParameterSet};

/// Three-class model on the birth-outcome scale.
pub fn three_class_truth() -> (ModelSpec, ParameterSet) {
    let spec = ModelSpec::full(3, 3, 4, 2);
    let theta = ParameterSet {
        ordinal: OrdinalEqParams {
            intercept: 2.053,
            cutpoints: vec![0.0, -2.695],
            coefficients: vec![0.103, -0.009, -0.806, -1.100],
        },
        binary: BinaryEqParams {
            intercept: -0.763,
            coefficients: vec![-0.027, 0.008, -0.679, -0.677],
            cause_coefficients: vec![-0.152, -0.468],
        },
        gaussian: GaussianEqParams {
            intercept: vec![39.346, 3.238],
            coefficients: vec![vec![-0.015, -0.001, -0.194, -0.112], vec![-0.004, -0.0002, 0.041, -0.031]],
            cause_coefficients: vec![vec![0.025, 0.029, 0.025], vec![0.023, 0.043, 0.011]],
            covariance: vec![vec![1.776, 0.248], vec![0.248, 0.171]],
        },
        latent: LatentStructure {
            ordinal_support: vec![0.8, 0.0, -0.8],
            binary_support: vec![1.0, 0.0, -1.0],
            outcome_support: vec![vec![-6.0, -1.2], vec![0.0, 0.0], vec![6.0, 0.8]],
            weights: vec![0.6, 0.25, 0.15],
        },
    }
    .center_support_points();
    (spec, theta)
}

/// Simulated, encoded dataset of `n` records from [`three_class_truth`].
pub fn workload(n: usize, seed: u64) -> (Dataset, ModelSpec, ParameterSet) {
    let (spec, theta) = three_class_truth();
    let centering = Centering { age_mean: 30.0, age_sq_mean: 28.09 };
    let sim = simulate(&theta, &spec, &SchemaConfig::default(), &centering, n, seed, CovariateSource::Synthetic)
        .expect("simulation");
    let design = encode_with_centering(&sim.data, centering).expect("encoding");
    (design.dataset, spec, theta)
}
