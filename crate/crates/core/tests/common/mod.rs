#![allow(dead_code)]

use eesched_core::model::{ChannelTrace, EpochGrid, Event, Instance};
use eesched_core::power::CircuitParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random feasible instance: at most `max_epochs` epochs, total data
/// at most `max_total`, static gain or exponential per-epoch gains.
pub fn small_instance(seed: u64, max_epochs: usize, max_total: f64, fading: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_epochs);
    let lengths: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.5)).collect();
    let grid = EpochGrid::from_lengths(&lengths).unwrap();

    let mut arrival_epochs = vec![0];
    arrival_epochs.extend((1..n).filter(|_| rng.random_bool(0.5)));
    let mut deadline_epochs: Vec<usize> = (1..n).filter(|_| rng.random_bool(0.5)).collect();
    deadline_epochs.push(n);

    let total = rng.random_range(0.2..max_total);
    let weights: Vec<f64> = arrival_epochs.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut arrivals: Vec<Event> = arrival_epochs
        .iter()
        .zip(&weights)
        .map(|(&k, &w)| Event::new(k, total * w / wsum))
        .collect();
    let assigned: f64 = arrivals[..arrivals.len() - 1].iter().map(|e| e.amount).sum();
    let last = arrivals.len() - 1;
    arrivals[last].amount = total - assigned;

    // Cumulative demand never exceeds what arrived strictly before.
    let mut deadlines = Vec::new();
    let mut prev = 0.0;
    for (j, &k) in deadline_epochs.iter().enumerate() {
        let available: f64 = arrivals.iter().filter(|e| e.epoch < k).map(|e| e.amount).sum();
        let cum = if j + 1 == deadline_epochs.len() {
            total
        } else {
            let u: f64 = rng.random_range(0.0..1.0);
            (available * u).max(prev)
        };
        deadlines.push(Event::new(k, cum - prev));
        prev = cum;
    }

    let channel = if fading {
        ChannelTrace::PerEpoch(
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random_range(f64::EPSILON..1.0);
                    (-2.0 * u.ln()).max(0.05)
                })
                .collect(),
        )
    } else {
        ChannelTrace::Static(rng.random_range(0.5..4.0))
    };
    let rho = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.05..4.0) };
    Instance::new(grid, arrivals, deadlines, channel, CircuitParams::on_power(rho)).unwrap()
}
