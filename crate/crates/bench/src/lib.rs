//! Shared fixtures for the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdfit_core::prior::AnalyticShape;
use sdfit_core::sdf::{LatentCode, NetConfig, SdfNetwork};
use sdfit_core::vec3::Point3;

pub fn random_points(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ]
        })
        .collect()
}

pub fn sphere_cloud(n: usize, seed: u64) -> Vec<Point3> {
    let shape = AnalyticShape::Sphere { center: [0.0; 3], radius: 0.35 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| shape.sample_surface(&mut rng)).collect()
}

pub fn desk_net(seed: u64) -> (SdfNetwork, LatentCode) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = NetConfig {
        code_len: 64,
        hidden_width: 64,
        depth: 8,
        ..NetConfig::default()
    };
    let net = SdfNetwork::init(&config, &mut rng);
    let code = LatentCode::random(64, 0.1, &mut rng);
    (net, code)
}
