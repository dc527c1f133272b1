//! Fixed inputs shared by the benchmarks.

use branchflow::{Atom, AtomicMeasure, CostModel, StarInstance, TransportInstance};

/// `n` unit sinks spread over a circle around a source at the origin.
pub fn ring_instance(n: usize, p: f64) -> TransportInstance {
    let sinks: Vec<Atom> = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64 + 0.1 * (k % 3) as f64;
            Atom::new(
                vec![(1.0 + 0.2 * (k % 2) as f64) * a.cos(), a.sin()],
                1.0 + 0.1 * k as f64,
            )
        })
        .collect();
    let supply = sinks.iter().map(|a| a.mass).sum();
    TransportInstance::new(
        2,
        AtomicMeasure::new(vec![Atom::new(vec![0.0, 0.0], supply)]).expect("source"),
        AtomicMeasure::new(sinks).expect("sinks"),
        CostModel::power(p).expect("exponent"),
    )
    .expect("instance")
}

/// Star with `n` unit sinks on the coordinate half-axes of `R^{⌈n/2⌉}`.
pub fn axis_star(n: usize) -> StarInstance {
    let d = n.div_ceil(2);
    let sinks = (0..n)
        .map(|k| {
            let mut x = vec![0.0; d];
            x[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
            Atom::new(x, 1.0)
        })
        .collect();
    StarInstance::new(vec![0.0; d], sinks, None).expect("star")
}
