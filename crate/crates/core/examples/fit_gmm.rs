//! Fit a 2D Gaussian mixture by EM and inspect the fit.
//!
//! cargo run --example fit_gmm

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shelfsize::gmm::{fit_gmm_em, gaussian_pdf, EmOptions, Gaussian2D};

fn main() -> shelfsize::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = Normal::new(0.0, 0.1).unwrap();
    let centers = [[0.5, 1.0], [0.5, 2.2]];
    let points: Vec<[f64; 2]> = (0..400)
        .map(|i| {
            let c = centers[i % 2];
            [c[0] + n.sample(&mut rng), c[1] + n.sample(&mut rng)]
        })
        .collect();

    let (gmm, diag) = fit_gmm_em(&points, 2, &EmOptions { seed: 11, ..Default::default() })?;
    println!(
        "k={} iterations={} converged={} log-likelihood={:.3}",
        diag.k_effective, diag.iterations, diag.converged, diag.log_likelihood
    );
    for c in gmm.components() {
        println!("  w={:.3} mean=({:.3}, {:.3}) var=({:.4}, {:.4})", c.weight, c.mean[0], c.mean[1], c.cov[0][0], c.cov[1][1]);
    }
    assert!(diag.ll_history.windows(2).all(|w| w[1] >= w[0] - 1e-9));

    let std_normal = Gaussian2D::new([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])?;
    println!("N(0, I) at its mean: {:.6} (1/2pi = {:.6})", gaussian_pdf([0.0, 0.0], &std_normal)?, 1.0 / std::f64::consts::TAU);
    Ok(())
}
