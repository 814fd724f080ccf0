use lsv_lab::ensemble::{sample_matrix_trial, EntryDistribution};
use lsv_lab::spectra::fast::{sigma_min_square, Route, Workspace};
use std::time::Instant;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let reps = 200;
    let mut ws = Workspace::default();
    for d in [EntryDistribution::gaussian(), EntryDistribution::rademacher()] {
        let mats: Vec<Vec<f64>> = (0..reps).map(|i| sample_matrix_trial(&d, n, n, 1, i).unwrap().entries.iter().copied().collect()).collect();
        let t = Instant::now();
        let mut svd = 0;
        let mut acc = 0.0;
        for a in &mats {
            let (s, r) = sigma_min_square(a, n, &mut ws).unwrap();
            acc += s * (n as f64).sqrt();
            if r == Route::Svd { svd += 1; }
        }
        println!("{} fast {:.3} ms, svd fallbacks {svd}, mean {:.4}", d.name(), t.elapsed().as_secs_f64() * 1e3 / reps as f64, acc / reps as f64);
    }
}
