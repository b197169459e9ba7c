//! Exact samplers for the ℓ2, Laplace, and Gaussian mechanisms.
//!
//! The ℓ2 mechanism is sampled as `center + r·z` with `r ~ Gamma(d + 1, σ)`
//! and `z` uniform in the unit ball. Both pieces decompose into per-coordinate
//! work, which [`sample_l2_parallel`] exposes as two map/combine rounds.
//!
//! All samplers are deterministic functions of their inputs and the
//! generator state.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::Mechanism;
use crate::error::{Error, Result};

/// Seed plus stream id of a reproducible generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        RngState { seed, stream_id }
    }

    /// ChaCha8 keyed by `seed`, positioned on stream `stream_id`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// An independent child generator, e.g. one per worker or per chunk.
    pub fn substream(&self, index: u64) -> RngState {
        RngState {
            seed: splitmix64(self.seed ^ splitmix64(self.stream_id)),
            stream_id: index,
        }
    }
}

/// Uniform draw on `(0, 1]`, so `−ln U` is always finite.
pub fn open_closed_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `Gamma(shape, scale)` for integer `shape`, as `−scale · Σ ln U_i`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: usize, scale: f64, rng: &mut R) -> f64 {
    debug_assert!(shape >= 1);
    let log_sum: f64 = (0..shape).map(|_| -open_closed_uniform(rng).ln()).sum();
    scale * log_sum
}

/// Writes a uniform point of the unit ℓ2 ball into `out`.
pub fn fill_unit_ball<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    let dim = out.len();
    let sum_squares = loop {
        let mut ss = 0.0;
        for slot in out.iter_mut() {
            let x = standard_normal(rng);
            *slot = x;
            ss += x * x;
        }
        if ss > 0.0 {
            break ss;
        }
    };
    let radius = open_closed_uniform(rng).powf(1.0 / dim as f64);
    let factor = radius / sum_squares.sqrt();
    out.iter_mut().for_each(|v| *v *= factor);
}

/// Uniform point of the unit ℓ2 ball in `R^dim`.
pub fn sample_unit_ball<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    fill_unit_ball(&mut out, rng);
    out
}

/// Writes an ℓ2-mechanism draw about `center` into `out`.
pub fn fill_l2<R: Rng + ?Sized>(center: &[f64], sigma: f64, rng: &mut R, out: &mut [f64]) {
    debug_assert_eq!(center.len(), out.len());
    let radius = sample_gamma(center.len() + 1, sigma, rng);
    fill_unit_ball(out, rng);
    for (o, c) in out.iter_mut().zip(center) {
        *o = c + radius * *o;
    }
}

fn check_scale(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "noise scale must be positive, got {sigma}"
        )))
    }
}

fn check_center(center: &[f64]) -> Result<()> {
    if center.is_empty() {
        return Err(Error::domain("center must have at least one coordinate"));
    }
    if center.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain("center coordinates must be finite"));
    }
    Ok(())
}

/// One draw of the ℓ2 mechanism: density ∝ `exp(−‖y − center‖₂ / σ)`.
pub fn sample_l2<R: Rng + ?Sized>(center: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_center(center)?;
    check_scale(sigma)?;
    let mut out = vec![0.0; center.len()];
    fill_l2(center, sigma, rng, &mut out);
    Ok(out)
}

/// Intermediate values of one run of [`sample_l2_parallel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelTrace {
    /// `−ln U_i` drawn by worker `i`.
    pub worker_log_uniforms: Vec<f64>,
    /// Standard normal drawn by worker `i`.
    pub worker_gauss: Vec<f64>,
    /// Manager's uniform `Y` on `(0, 1]`, which sets the ball radius.
    pub manager_uniform_y: f64,
    /// Manager's own `−ln U_{d+1}`.
    pub manager_log_uniform: f64,
    /// `σ · (manager_log_uniform + Σ worker_log_uniforms)`.
    pub radius: f64,
    pub sum_squares: f64,
}

struct WorkerDraw {
    log_uniform: f64,
    gauss: f64,
}

/// The ℓ2 mechanism as a coordinator and one worker per coordinate.
///
/// Round one: every worker draws `−ln U_i` and a normal `X_i`; the manager
/// combines `Σ −ln U_i` and `Σ X_i²`, adds its own `−ln U_{d+1}`, and
/// publishes `r = σ Σ(−ln U)`, `Y`, and `Σ X²`. Round two: worker `i`
/// outputs `center_i + r · Y^{1/d} · X_i / √(Σ X²)`.
///
/// The output has the same law as [`sample_l2`], though not the same bits.
pub fn sample_l2_parallel<R: Rng + Send>(
    center: &[f64],
    sigma: f64,
    worker_rngs: &mut [R],
    manager_rng: &mut R,
) -> Result<(Vec<f64>, ParallelTrace)> {
    check_center(center)?;
    check_scale(sigma)?;
    let dim = center.len();
    if worker_rngs.len() != dim {
        return Err(Error::domain(format!(
            "need one worker stream per coordinate: {} streams for dim {dim}",
            worker_rngs.len()
        )));
    }

    let (draws, sum_squares) = loop {
        // map
        let draws: Vec<WorkerDraw> = worker_rngs
            .par_iter_mut()
            .map(|rng| WorkerDraw {
                log_uniform: -open_closed_uniform(rng).ln(),
                gauss: standard_normal(rng),
            })
            .collect();
        // combine, in worker order
        let sum_squares: f64 = draws.iter().map(|w| w.gauss * w.gauss).sum();
        if sum_squares > 0.0 {
            break (draws, sum_squares);
        }
    };
    let worker_log_sum: f64 = draws.iter().map(|w| w.log_uniform).sum();
    let manager_log_uniform = -open_closed_uniform(manager_rng).ln();
    let manager_uniform_y = open_closed_uniform(manager_rng);
    let radius = sigma * (manager_log_uniform + worker_log_sum);

    // second map: each worker scales its own coordinate
    let scale = radius * manager_uniform_y.powf(1.0 / dim as f64) / sum_squares.sqrt();
    let output: Vec<f64> = center
        .par_iter()
        .zip(draws.par_iter())
        .map(|(c, w)| c + scale * w.gauss)
        .collect();

    let trace = ParallelTrace {
        worker_log_uniforms: draws.iter().map(|w| w.log_uniform).collect(),
        worker_gauss: draws.iter().map(|w| w.gauss).collect(),
        manager_uniform_y,
        manager_log_uniform,
        radius,
        sum_squares,
    };
    Ok((output, trace))
}

/// Independent Laplace(scale) noise on every coordinate.
pub fn sample_laplace<R: Rng + ?Sized>(
    center: &[f64],
    scale: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_center(center)?;
    check_scale(scale)?;
    Ok(center
        .iter()
        .map(|c| {
            let magnitude = -scale * open_closed_uniform(rng).ln();
            if rng.random::<bool>() {
                c + magnitude
            } else {
                c - magnitude
            }
        })
        .collect())
}

/// Independent `N(0, σ²)` noise on every coordinate.
pub fn sample_gaussian<R: Rng + ?Sized>(
    center: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_center(center)?;
    check_scale(sigma)?;
    Ok(center
        .iter()
        .map(|c| c + sigma * standard_normal(rng))
        .collect())
}

/// A batch of mechanism outputs and how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub mechanism: Mechanism,
    pub dim: usize,
    pub count: usize,
    pub sigma: f64,
    pub seed: u64,
    pub values: Vec<Vec<f64>>,
}

impl SampleBatch {
    /// CSV column names `x0 .. x{dim-1}`.
    pub fn column_names(&self) -> Vec<String> {
        (0..self.dim).map(|i| format!("x{i}")).collect()
    }
}

/// `count` draws about the origin from one generator stream.
///
/// With `parallel` set, ℓ2 draws go through [`sample_l2_parallel`], worker
/// `i` on substream `i + 1` and the manager on substream `0`.
pub fn sample_batch(
    mechanism: Mechanism,
    dim: usize,
    sigma: f64,
    count: usize,
    state: RngState,
    parallel: bool,
) -> Result<SampleBatch> {
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    check_scale(sigma)?;
    let center = vec![0.0; dim];
    let values = match (mechanism, parallel) {
        (Mechanism::L2, true) => {
            let mut workers: Vec<ChaCha8Rng> = (0..dim as u64)
                .map(|i| state.substream(i + 1).rng())
                .collect();
            let mut manager = state.substream(0).rng();
            (0..count)
                .map(|_| {
                    sample_l2_parallel(&center, sigma, &mut workers, &mut manager).map(|(y, _)| y)
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => {
            let mut rng = state.rng();
            (0..count)
                .map(|_| match mechanism {
                    Mechanism::L2 => sample_l2(&center, sigma, &mut rng),
                    Mechanism::Laplace => sample_laplace(&center, sigma, &mut rng),
                    Mechanism::Gaussian => sample_gaussian(&center, sigma, &mut rng),
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(SampleBatch {
        mechanism,
        dim,
        count,
        sigma,
        seed: state.seed,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_mean() {
        let mut rng = RngState::new(1).rng();
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_gamma(1, 1.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.004, "{mean}");
    }

    #[test]
    fn gamma_mean_scales_with_shape() {
        let mut rng = RngState::new(2).rng();
        let (d, sigma) = (4usize, 0.7);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| sample_gamma(d + 1, sigma, &mut rng))
            .sum::<f64>()
            / n as f64;
        let shape = (d + 1) as f64;
        assert!((mean - shape * sigma).abs() < 4.0 * sigma * shape.sqrt() / 1e3);
    }

    #[test]
    fn same_state_same_draws() {
        let a = sample_gamma(3, 2.0, &mut RngState::new(9).rng());
        let b = sample_gamma(3, 2.0, &mut RngState::new(9).rng());
        assert_eq!(a.to_bits(), b.to_bits());
        let c = sample_gamma(3, 2.0, &mut RngState::with_stream(9, 1).rng());
        assert_ne!(a, c);
    }

    #[test]
    fn substreams_differ() {
        let base = RngState::new(5);
        let a: f64 = base.substream(1).rng().random();
        let b: f64 = base.substream(2).rng().random();
        assert_ne!(a, b);
        assert_eq!(base.substream(1), base.substream(1));
    }

    #[test]
    fn unit_ball_second_moment() {
        let mut rng = RngState::new(3).rng();
        let n = 1_000_000;
        let mut total = 0.0;
        let mut coord_sums = [0.0; 3];
        for _ in 0..n {
            let z = sample_unit_ball(3, &mut rng);
            assert!(z.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12);
            total += z.iter().map(|v| v * v).sum::<f64>();
            for (s, v) in coord_sums.iter_mut().zip(&z) {
                *s += v;
            }
        }
        assert!((total / n as f64 - 0.6).abs() < 0.003);
        for s in coord_sums {
            assert!((s / n as f64).abs() < 4.0 / 1e3);
        }
    }

    #[test]
    fn l2_batch_is_reproducible() {
        let a = sample_batch(Mechanism::L2, 5, 1.3, 50, RngState::new(42), false).unwrap();
        let b = sample_batch(Mechanism::L2, 5, 1.3, 50, RngState::new(42), false).unwrap();
        assert_eq!(a, b);
        let a = sample_batch(Mechanism::L2, 5, 1.3, 50, RngState::new(42), true).unwrap();
        let b = sample_batch(Mechanism::L2, 5, 1.3, 50, RngState::new(42), true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 50);
        assert!(a
            .values
            .iter()
            .all(|row| row.len() == 5 && row.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn parallel_trace_is_consistent() {
        let state = RngState::new(8);
        let dim = 6;
        let mut workers: Vec<_> = (0..dim as u64)
            .map(|i| state.substream(i + 1).rng())
            .collect();
        let mut manager = state.substream(0).rng();
        let center = vec![0.5; dim];
        let sigma = 0.8;
        for _ in 0..100 {
            let (y, trace) =
                sample_l2_parallel(&center, sigma, &mut workers, &mut manager).unwrap();
            let logs = trace.manager_log_uniform + trace.worker_log_uniforms.iter().sum::<f64>();
            assert!((trace.radius - sigma * logs).abs() <= 1e-12 * trace.radius.max(1.0));
            assert!(trace.worker_log_uniforms.iter().all(|&l| l >= 0.0));
            assert!(trace.manager_log_uniform >= 0.0);
            let ss: f64 = trace.worker_gauss.iter().map(|g| g * g).sum();
            assert!((trace.sum_squares - ss).abs() <= 1e-12 * ss);
            let dist: f64 = y
                .iter()
                .zip(&center)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let expected = trace.radius * trace.manager_uniform_y.powf(1.0 / dim as f64);
            assert!((dist - expected).abs() < 1e-10 * expected.max(1.0));
        }
    }

    #[test]
    fn parallel_needs_one_stream_per_coordinate() {
        let state = RngState::new(1);
        let mut workers: Vec<_> = (0..2).map(|i| state.substream(i + 1).rng()).collect();
        let mut manager = state.substream(0).rng();
        assert!(sample_l2_parallel(&[0.0; 3], 1.0, &mut workers, &mut manager).is_err());
    }

    #[test]
    fn samplers_reject_bad_inputs() {
        let mut rng = RngState::new(1).rng();
        assert!(sample_l2(&[0.0], 0.0, &mut rng).is_err());
        assert!(sample_l2(&[], 1.0, &mut rng).is_err());
        assert!(sample_laplace(&[0.0], -1.0, &mut rng).is_err());
        assert!(sample_gaussian(&[f64::NAN], 1.0, &mut rng).is_err());
        assert!(sample_batch(Mechanism::Gaussian, 0, 1.0, 3, RngState::new(0), false).is_err());
    }

    #[test]
    fn column_names() {
        let batch = sample_batch(Mechanism::Gaussian, 3, 1.0, 1, RngState::new(0), false).unwrap();
        assert_eq!(batch.column_names(), vec!["x0", "x1", "x2"]);
    }
}
