//! Data-adaptive scalar quantizer fitting by alternating closed-form
//! coordinate steps: boundaries optimal for frozen levels are midpoints of
//! adjacent levels; levels optimal for frozen boundaries are the conditional
//! means of their cells. Either half-step cannot increase the mean squared
//! error, so the recorded distortion history is nonincreasing.

use crate::error::{Error, Result};
use crate::quantize::ScalarSpec;

/// Fit outcome: the spec plus the distortion recorded after every half-step
/// (feature-space mean squared error).
#[derive(Debug, Clone)]
pub struct LloydFit {
    pub spec: ScalarSpec,
    /// Distortions after each boundary update and each level update, in
    /// order, starting with the uniform initialization's distortion.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 100;

/// Distortion of midpoint-boundary assignment via prefix sums over sorted
/// samples.
struct SortedSamples {
    xs: Vec<f64>,
    prefix_x: Vec<f64>,
    prefix_x2: Vec<f64>,
}

impl SortedSamples {
    fn new(samples: &[f64]) -> Self {
        let mut xs = samples.to_vec();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prefix_x = Vec::with_capacity(xs.len() + 1);
        let mut prefix_x2 = Vec::with_capacity(xs.len() + 1);
        prefix_x.push(0.0);
        prefix_x2.push(0.0);
        for &x in &xs {
            prefix_x.push(prefix_x.last().unwrap() + x);
            prefix_x2.push(prefix_x2.last().unwrap() + x * x);
        }
        SortedSamples { xs, prefix_x, prefix_x2 }
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    /// Index of the first sample >= b (cell boundaries belong upward).
    fn cut(&self, b: f64) -> usize {
        self.xs.partition_point(|&x| x < b)
    }

    /// Cell ranges `[start, end)` for the given interior boundaries.
    fn cells(&self, boundaries: &[f64]) -> Vec<(usize, usize)> {
        let mut cells = Vec::with_capacity(boundaries.len() + 1);
        let mut start = 0usize;
        for &b in boundaries {
            let end = self.cut(b);
            cells.push((start, end));
            start = end;
        }
        cells.push((start, self.len()));
        cells
    }

    fn sum(&self, a: usize, b: usize) -> f64 {
        self.prefix_x[b] - self.prefix_x[a]
    }

    fn sum_sq(&self, a: usize, b: usize) -> f64 {
        self.prefix_x2[b] - self.prefix_x2[a]
    }

    /// Mean squared error of reconstructing each cell at its level.
    fn distortion(&self, boundaries: &[f64], levels: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((a, b), &l) in self.cells(boundaries).into_iter().zip(levels) {
            let n = (b - a) as f64;
            acc += self.sum_sq(a, b) - 2.0 * l * self.sum(a, b) + n * l * l;
        }
        acc / self.len() as f64
    }
}

fn midpoint_boundaries(levels: &[f64]) -> Vec<f64> {
    levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Fits a `bits`-bit scalar quantizer to the empirical distribution of
/// `samples`.
///
/// Starts from the uniform quantizer over the empirical range, then
/// alternates the two closed-form half-steps until the relative distortion
/// improvement drops below `tol` or `max_iters` is reached. An empty cell is
/// repaired by re-seeding its level at the midpoint of the most populated
/// cell (then re-sorting levels), which keeps the distortion monotone.
pub fn lloyd_max_fit(samples: &[f64], bits: u8, max_iters: usize, tol: f64) -> Result<LloydFit> {
    validate_inputs(samples, bits)?;
    let sorted = SortedSamples::new(samples);
    let lo = sorted.xs[0];
    let hi = sorted.xs[sorted.len() - 1];
    let levels_n = 1usize << bits;
    let step = (hi - lo) / levels_n as f64;
    let levels: Vec<f64> = (0..levels_n).map(|k| lo + (k as f64 + 0.5) * step).collect();
    let boundaries: Vec<f64> = (1..levels_n).map(|k| lo + k as f64 * step).collect();
    fit_from(&sorted, bits, levels, boundaries, max_iters, tol)
}

/// [`lloyd_max_fit`] warm-started from caller-provided levels (for building
/// nested-rate quantizer families whose distortion is monotone in the bit
/// width: seed the `b+1`-bit fit with a superset of the `b`-bit levels).
pub fn lloyd_refine_from_levels(
    samples: &[f64],
    mut levels: Vec<f64>,
    bits: u8,
    max_iters: usize,
    tol: f64,
) -> Result<LloydFit> {
    validate_inputs(samples, bits)?;
    if levels.len() != 1usize << bits {
        return Err(Error::Config(format!(
            "warm start needs {} levels, got {}",
            1usize << bits,
            levels.len()
        )));
    }
    let sorted = SortedSamples::new(samples);
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let boundaries = midpoint_boundaries(&levels);
    fit_from(&sorted, bits, levels, boundaries, max_iters, tol)
}

fn validate_inputs(samples: &[f64], bits: u8) -> Result<()> {
    if !(1..=16).contains(&bits) {
        return Err(Error::Config(format!("bits {bits} outside 1..=16")));
    }
    let levels_n = 1usize << bits;
    let mut distinct = samples.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < levels_n {
        return Err(Error::Config(format!(
            "need at least {levels_n} distinct samples, have {}",
            distinct.len()
        )));
    }
    if distinct.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("samples must be finite".into()));
    }
    Ok(())
}

fn fit_from(
    sorted: &SortedSamples,
    bits: u8,
    mut levels: Vec<f64>,
    mut boundaries: Vec<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<LloydFit> {

    let mut history = vec![sorted.distortion(&boundaries, &levels)];
    let mut converged = false;
    let mut iterations = 0;
    let mut prev_iter_distortion = history[0];

    for _ in 0..max_iters {
        iterations += 1;

        // half-step 1: freeze levels, optimal boundaries are the midpoints
        // of the sorted levels (exact nearest-level partition). A repaired
        // level from the previous round served no samples, so re-partition
        // cannot lose: every sample can still reach its previous level.
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        boundaries = midpoint_boundaries(&levels);
        history.push(sorted.distortion(&boundaries, &levels));

        // half-step 2: freeze boundaries, optimal levels are cell means;
        // a level with an empty cell keeps its value for the distortion
        // record (it contributes nothing either way)
        let cells = sorted.cells(&boundaries);
        let mut empties = Vec::new();
        for (k, &(a, b)) in cells.iter().enumerate() {
            if b > a {
                levels[k] = sorted.sum(a, b) / (b - a) as f64;
            } else {
                empties.push(k);
            }
        }
        history.push(sorted.distortion(&boundaries, &levels));

        let cur = *history.last().unwrap();
        let improvement = prev_iter_distortion - cur;
        prev_iter_distortion = cur;

        // repair after recording: re-seed wasted levels at the midpoint of
        // the most populated cell's data range so the next partition splits
        // that cell
        if !empties.is_empty() {
            let (ba, bb) = cells
                .iter()
                .copied()
                .max_by_key(|&(a, b)| b - a)
                .expect("at least one cell");
            let host_mid = 0.5 * (sorted.xs[ba] + sorted.xs[bb - 1]);
            for (i, k) in empties.into_iter().enumerate() {
                // stagger multiple re-seeds so they stay distinct
                levels[k] = host_mid + (i as f64 + 1.0) * f64::EPSILON * host_mid.abs().max(1.0);
            }
        } else if improvement <= tol * prev_iter_distortion.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    // final boundaries consistent with the last level update
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    boundaries = midpoint_boundaries(&levels);
    history.push(sorted.distortion(&boundaries, &levels));

    // collapse accidental duplicate levels (possible on discrete data) by
    // nudging boundaries apart is not meaningful; instead reject, since the
    // distinct-sample precondition prevents it for continuous data
    for w in boundaries.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Degenerate(
                "adaptive fit collapsed two levels; data has too few distinct values".into(),
            ));
        }
    }

    let spec = ScalarSpec { bits, boundaries, levels };
    spec.validate()?;
    Ok(LloydFit { spec, history, iterations, converged })
}
