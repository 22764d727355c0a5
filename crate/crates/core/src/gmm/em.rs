use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, Component, Gmm2D, Mat2, Vec2, LN_2PI};
use crate::error::{Error, Result};
use crate::synth::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once `|ΔLL| <= tol * max(1, |LL|)`.
    pub tol: f64,
    /// Added to the covariance diagonal on every M-step.
    pub reg_eps: f64,
    pub n_restarts: usize,
    pub seed: u64,
    /// Components whose responsibility mass falls below this are dropped.
    pub min_support: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-6, reg_eps: 1e-6, n_restarts: 5, seed: 0, min_support: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub log_likelihood: f64,
    pub iterations: usize,
    pub k_effective: usize,
    pub converged: bool,
    /// Total log-likelihood after each E-step of the winning run, starting
    /// after its last pruning event.
    pub ll_history: Vec<f64>,
    pub best_restart: usize,
    pub pruned: usize,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec2>,
    covs: Vec<Mat2>,
}

struct Run {
    params: Params,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    pruned: usize,
}

/// Precomputed inverse covariance and log normaliser for one component.
struct Prepared {
    ln_w_norm: f64,
    mean: Vec2,
    inv: Mat2,
}

fn prepare(p: &Params) -> Vec<Prepared> {
    (0..p.weights.len())
        .map(|k| {
            let c = p.covs[k];
            let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
            Prepared {
                ln_w_norm: p.weights[k].ln() - LN_2PI - 0.5 * det.ln(),
                mean: p.means[k],
                inv: [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]],
            }
        })
        .collect()
}

/// Fills `resp` (n x k, row-major) and returns the total log-likelihood.
fn e_step(points: &[Vec2], p: &Params, resp: &mut [f64]) -> f64 {
    let prep = prepare(p);
    let k = prep.len();
    let mut total = 0.0;
    for (i, x) in points.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        for (r, c) in row.iter_mut().zip(&prep) {
            let dx = x[0] - c.mean[0];
            let dy = x[1] - c.mean[1];
            let q = dx * dx * c.inv[0][0] + dx * dy * (c.inv[0][1] + c.inv[1][0]) + dy * dy * c.inv[1][1];
            *r = c.ln_w_norm - 0.5 * q;
        }
        let lse = log_sum_exp(row.iter().copied());
        for r in row.iter_mut() {
            *r = (*r - lse).exp();
        }
        total += lse;
    }
    total
}

fn m_step(points: &[Vec2], resp: &[f64], k: usize, reg_eps: f64) -> Params {
    let n = points.len();
    let mut weights = vec![0.0; k];
    let mut means = vec![[0.0; 2]; k];
    for (i, x) in points.iter().enumerate() {
        for j in 0..k {
            let r = resp[i * k + j];
            weights[j] += r;
            means[j][0] += r * x[0];
            means[j][1] += r * x[1];
        }
    }
    for j in 0..k {
        means[j][0] /= weights[j];
        means[j][1] /= weights[j];
    }
    let mut covs = vec![[[0.0; 2]; 2]; k];
    for (i, x) in points.iter().enumerate() {
        for j in 0..k {
            let r = resp[i * k + j];
            let dx = x[0] - means[j][0];
            let dy = x[1] - means[j][1];
            covs[j][0][0] += r * dx * dx;
            covs[j][0][1] += r * dx * dy;
            covs[j][1][1] += r * dy * dy;
        }
    }
    for j in 0..k {
        let nk = weights[j];
        covs[j][0][0] = covs[j][0][0] / nk + reg_eps;
        covs[j][1][1] = covs[j][1][1] / nk + reg_eps;
        covs[j][0][1] /= nk;
        covs[j][1][0] = covs[j][0][1];
        weights[j] = nk / n as f64;
    }
    Params { weights, means, covs }
}

fn dist2(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// k-means++ seeding followed by one hard-assignment M-step.
fn init_params(points: &[Vec2], k: usize, reg_eps: f64, rng: &mut ChaCha8Rng) -> Params {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|&x| dist2(x, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick];
        centers.push(c);
        for (d, &x) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(x, c));
        }
    }
    let k = centers.len();
    let mut resp = vec![0.0; points.len() * k];
    for (i, &x) in points.iter().enumerate() {
        let nearest = (0..k)
            .min_by(|&a, &b| dist2(x, centers[a]).total_cmp(&dist2(x, centers[b])))
            .unwrap_or(0);
        resp[i * k + nearest] = 1.0;
    }
    m_step(points, &resp, k, reg_eps)
}

fn run_em(points: &[Vec2], k: usize, opts: &EmOptions, rng: &mut ChaCha8Rng) -> Run {
    let mut params = init_params(points, k, opts.reg_eps, rng);
    let mut history: Vec<f64> = Vec::new();
    let mut pruned = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut resp = Vec::new();

    while iterations < opts.max_iters {
        let k = params.weights.len();
        resp.resize(points.len() * k, 0.0);
        let ll = e_step(points, &params, &mut resp);
        iterations += 1;
        if let Some(&prev) = history.last() {
            history.push(ll);
            if (ll - prev).abs() <= opts.tol * ll.abs().max(1.0) {
                converged = true;
                break;
            }
        } else {
            history.push(ll);
        }

        let n = points.len() as f64;
        let mass: Vec<f64> = (0..k).map(|j| (0..points.len()).map(|i| resp[i * k + j]).sum()).collect();
        let keep: Vec<usize> = (0..k).filter(|&j| mass[j] >= opts.min_support.min(n)).collect();
        if keep.len() < k && !keep.is_empty() {
            pruned += k - keep.len();
            let wsum: f64 = keep.iter().map(|&j| params.weights[j]).sum();
            params = Params {
                weights: keep.iter().map(|&j| params.weights[j] / wsum).collect(),
                means: keep.iter().map(|&j| params.means[j]).collect(),
                covs: keep.iter().map(|&j| params.covs[j]).collect(),
            };
            // The likelihood sequence restarts with the reduced model.
            history.clear();
            continue;
        }
        params = m_step(points, &resp, k, opts.reg_eps);
    }
    if !converged {
        let k = params.weights.len();
        resp.resize(points.len() * k, 0.0);
        let ll = e_step(points, &params, &mut resp);
        history.push(ll);
    }
    Run { params, history, iterations, converged, pruned }
}

fn distinct_count(points: &[Vec2]) -> usize {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    sorted.dedup();
    sorted.len()
}

/// Maximum-likelihood EM for a 2D mixture with at most `k_max` components.
///
/// The component count is capped by the number of distinct points and by
/// `n / min_support`; components that lose their support during fitting are
/// pruned. The best of `n_restarts` k-means++ initialisations is returned.
pub fn fit_gmm_em(points: &[Vec2], k_max: usize, opts: &EmOptions) -> Result<(Gmm2D, FitDiagnostics)> {
    if points.is_empty() {
        return Err(Error::Empty("points"));
    }
    if k_max < 1 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    if !(opts.reg_eps > 0.0) || opts.n_restarts < 1 || opts.max_iters < 1 {
        return Err(Error::Config("EM needs reg_eps > 0, n_restarts >= 1 and max_iters >= 1".into()));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Data("non-finite point".into()));
    }
    let support_cap = (points.len() as f64 / opts.min_support.max(1.0)).floor() as usize;
    let k = k_max.min(distinct_count(points)).min(support_cap).max(1);

    let mut best: Option<(usize, Run)> = None;
    for restart in 0..opts.n_restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, restart as u64));
        let run = run_em(points, k, opts, &mut rng);
        let ll = *run.history.last().unwrap_or(&f64::NEG_INFINITY);
        let better = match &best {
            None => true,
            Some((_, b)) => ll > *b.history.last().unwrap_or(&f64::NEG_INFINITY),
        };
        if better {
            best = Some((restart, run));
        }
        // A single component has a unique optimum; restarts are redundant.
        if k == 1 {
            break;
        }
    }
    let (best_restart, run) = best.expect("at least one restart");
    let Params { weights, means, covs } = run.params;
    let components = weights
        .iter()
        .zip(means)
        .zip(covs)
        .map(|((&weight, mean), cov)| Component { weight, mean, cov })
        .collect();
    let gmm = Gmm2D::new(components)?;
    let diag = FitDiagnostics {
        log_likelihood: *run.history.last().unwrap_or(&f64::NEG_INFINITY),
        iterations: run.iterations,
        k_effective: gmm.k(),
        converged: run.converged,
        ll_history: run.history,
        best_restart,
        pruned: run.pruned,
    };
    Ok((gmm, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blob(rng: &mut ChaCha8Rng, center: Vec2, sd: f64, n: usize) -> Vec<Vec2> {
        (0..n)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                [center[0] + sd * a, center[1] + sd * b]
            })
            .collect()
    }

    fn mean_of(pts: &[Vec2]) -> Vec2 {
        let n = pts.len() as f64;
        [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]
    }

    fn assert_monotone(h: &[f64]) {
        for w in h.windows(2) {
            assert!(w[1] >= w[0] - 1e-7, "log-likelihood decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn identical_points_collapse_to_one_component() {
        let pts = vec![[1.0, 2.0]; 50];
        let (m, d) = fit_gmm_em(&pts, 2, &EmOptions::default()).unwrap();
        assert_eq!(d.k_effective, 1);
        let c = &m.components()[0];
        assert_eq!(c.mean, [1.0, 2.0]);
        assert!((c.cov[0][0] - 1e-6).abs() < 1e-15 && (c.cov[1][1] - 1e-6).abs() < 1e-15);
        assert_eq!(c.cov[0][1], 0.0);
    }

    #[test]
    fn two_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = blob(&mut rng, [0.0, 0.0], 0.1, 200);
        let b = blob(&mut rng, [5.0, 5.0], 0.1, 200);
        let (ma, mb) = (mean_of(&a), mean_of(&b));
        let pts: Vec<Vec2> = a.into_iter().chain(b).collect();
        let (m, d) = fit_gmm_em(&pts, 2, &EmOptions::default()).unwrap();
        assert_eq!(d.k_effective, 2);
        let mut comps = m.components().to_vec();
        comps.sort_by(|x, y| x.mean[0].total_cmp(&y.mean[0]));
        for (c, oracle) in comps.iter().zip([ma, mb]) {
            assert!((c.mean[0] - oracle[0]).abs() < 0.05 && (c.mean[1] - oracle[1]).abs() < 0.05);
            assert!((c.weight - 0.5).abs() < 0.05);
        }
        assert_monotone(&d.ll_history);
    }

    #[test]
    fn k_capped_by_support_and_distinct_points() {
        let pts = vec![[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]];
        let (_, d) = fit_gmm_em(&pts, 3, &EmOptions::default()).unwrap();
        assert_eq!(d.k_effective, 1);
        let (_, d) = fit_gmm_em(&[[3.0, 4.0]], 4, &EmOptions::default()).unwrap();
        assert_eq!(d.k_effective, 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_gmm_em(&[], 2, &EmOptions::default()), Err(Error::Empty(_))));
        assert!(fit_gmm_em(&[[0.0, 0.0]], 0, &EmOptions::default()).is_err());
        assert!(fit_gmm_em(&[[f64::NAN, 0.0]], 1, &EmOptions::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec2> =
            blob(&mut rng, [0.0, 0.0], 1.0, 60).into_iter().chain(blob(&mut rng, [2.0, 1.0], 0.5, 40)).collect();
        let o = EmOptions { seed: 17, ..Default::default() };
        assert_eq!(fit_gmm_em(&pts, 3, &o).unwrap(), fit_gmm_em(&pts, 3, &o).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn log_likelihood_monotone(seed in any::<u64>(), n in 4usize..60, k in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec2> = (0..n)
                .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(0.1..4.0)])
                .collect();
            let (m, d) = fit_gmm_em(&pts, k, &EmOptions { seed, ..Default::default() }).unwrap();
            for w in d.ll_history.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-7, "{} -> {}", w[0], w[1]);
            }
            let total: f64 = m.components().iter().map(|c| c.weight).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(m.k() <= k);
        }
    }
}
