#![allow(dead_code)]

use ndarray::{Array2, Array3};
use proptest::prelude::*;

use headrouter::router::PerProfile;
use headrouter::{ProfileBank, SampleBundle};

/// Small random bundle with entries drawn from `[-scale, scale]`.
pub fn bundle_strategy(max_audio: usize, scale: f32) -> impl Strategy<Value = SampleBundle> {
    (1usize..=5, 2usize..=max_audio, 1usize..=6, 2usize..=12, 2usize..=6).prop_flat_map(
        move |(nt, na, h, d, dk)| {
            let v = move |n: usize| prop::collection::vec(-scale..scale, n);
            (v(nt * d), v(na * d), v(h * d * dk), v(h * d * dk)).prop_map(move |(t, a, q, k)| {
                SampleBundle::new(
                    "prop".to_string(),
                    None,
                    Array2::from_shape_vec((nt, d), t).unwrap(),
                    Array2::from_shape_vec((na, d), a).unwrap(),
                    Array3::from_shape_vec((h, d, dk), q).unwrap(),
                    Array3::from_shape_vec((h, d, dk), k).unwrap(),
                    None,
                )
                .unwrap()
            })
        },
    )
}

/// Positive weights over `n` heads, not necessarily normalized.
pub fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n)
}

/// Bank with centers 0.1/0.2/0.3 and bandwidth 0.05.
pub fn bank(sem: Vec<f64>, aco: Vec<f64>) -> ProfileBank {
    ProfileBank::new(sem, aco, PerProfile::new(0.1, 0.2, 0.3), 0.05).unwrap()
}

/// A permutation of `0..n` driven by proptest.
pub fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle()
}
