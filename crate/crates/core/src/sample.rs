//! Synthetic detection data with reproducible randomness.
//!
//! Every draw takes an explicit `(seed, stream)` pair and builds a ChaCha20
//! generator from it, so parallel tasks use independent streams derived from
//! one master seed and the result does not depend on scheduling.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, WeightedAliasIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::scalar::Real;

/// Generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Counts per detector region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub n: Vec<u64>,
    pub total: u64,
}

impl DetectionCounts {
    pub fn new(n: Vec<u64>) -> Self {
        let total = n.iter().sum();
        Self { n, total }
    }

    /// Relative frequencies `f_k = n_k / N`.
    pub fn frequencies<T: Real>(&self) -> Vec<T> {
        let total = T::lit(self.total as f64);
        self.n.iter().map(|&c| T::lit(c as f64) / total).collect()
    }

    /// One comma-separated line of integers.
    pub fn to_csv_line(&self) -> String {
        self.n.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
    }
}

fn check_probabilities<T: Real>(p: &[T]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::InvalidProbabilities("empty probability vector".into()));
    }
    let v: Vec<f64> = p.iter().map(|x| x.as_f64()).collect();
    if let Some(bad) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidProbabilities(format!("entry {bad} is negative or not finite")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidProbabilities(format!("entries sum to {sum}, not 1")));
    }
    Ok(v)
}

/// One multinomial draw of `n` particles over the cells of `p`.
pub fn sample_counts<T: Real>(p: &[T], n: u64, seed: u64) -> Result<DetectionCounts> {
    sample_counts_with(p, n, &mut stream_rng(seed, 0))
}

/// [`sample_counts`] on a caller-supplied generator (sequential conditional binomials).
pub fn sample_counts_with<T: Real, R: Rng + ?Sized>(p: &[T], n: u64, rng: &mut R) -> Result<DetectionCounts> {
    if n == 0 {
        return Err(Error::Config("need at least one particle".into()));
    }
    let p = check_probabilities(p)?;
    let mut counts = vec![0u64; p.len()];
    let mut left = n;
    let mut mass = 1.0f64;
    for (k, &pk) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == p.len() || mass <= 0.0 {
            counts[k] = left;
            left = 0;
            break;
        }
        let q = (pk / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, q).map_err(|e| Error::InvalidProbabilities(e.to_string()))?.sample(rng);
        counts[k] = draw;
        left -= draw;
        mass -= pk;
    }
    if left > 0 {
        // Rounding left residual mass unassigned; give it to the last cell with weight.
        let k = p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1);
        counts[k] += left;
    }
    Ok(DetectionCounts::new(counts))
}

/// Detected positions, reported at lattice nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSample<T> {
    pub hits: Vec<(T, T)>,
    /// Flat lattice index of every hit.
    pub cells: Vec<usize>,
}

impl<T: Real> PositionSample<T> {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Hits given as coordinates, snapped to their lattice nodes.
    pub fn from_coordinates(grid: &GridSpec<T>, hits: Vec<(T, T)>) -> Result<Self> {
        let mut cells = Vec::with_capacity(hits.len());
        for &(x, z) in &hits {
            let (i, j) = grid
                .cell_of(x, z)
                .ok_or_else(|| Error::Config(format!("hit ({x}, {z}) lies outside the grid")))?;
            cells.push(grid.index(i, j));
        }
        Ok(Self { hits, cells })
    }

    /// `(cell, count)` pairs in ascending cell order.
    pub fn histogram(&self) -> Vec<(usize, u64)> {
        let mut cells = self.cells.clone();
        cells.sort_unstable();
        let mut out: Vec<(usize, u64)> = Vec::new();
        for c in cells {
            match out.last_mut() {
                Some((last, n)) if *last == c => *n += 1,
                _ => out.push((c, 1)),
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,z")?;
        for (x, z) in &self.hits {
            writeln!(w, "{x},{z}")?;
        }
        Ok(())
    }
}

/// Sampler over lattice cells with weights `I(x_i, z_j)·dx·dz`.
pub struct PositionSampler<T> {
    grid: GridSpec<T>,
    table: WeightedAliasIndex<f64>,
}

impl<T: Real> PositionSampler<T> {
    pub fn new(grid: &GridSpec<T>, intensity: &ScalarField<T>) -> Result<Self> {
        grid.check_shape(intensity)?;
        let area = grid.cell_area().as_f64();
        let weights: Vec<f64> = intensity.data.iter().map(|v| v.as_f64() * area).collect();
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidProbabilities(format!("intensity weight {bad} is negative or not finite")));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidProbabilities("intensity has no mass".into()));
        }
        if (total - 1.0).abs() > 1e-3 {
            log::warn!("intensity integrates to {total}; sampling the renormalized distribution");
        }
        let table = WeightedAliasIndex::new(weights).map_err(|e| Error::InvalidProbabilities(e.to_string()))?;
        Ok(Self { grid: *grid, table })
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PositionSample<T> {
        let mut hits = Vec::with_capacity(n);
        let mut cells = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = self.table.sample(rng);
            let (i, j) = (idx / self.grid.n_z, idx % self.grid.n_z);
            hits.push((self.grid.x(i), self.grid.z(j)));
            cells.push(idx);
        }
        PositionSample { hits, cells }
    }
}

/// `n` independent hits from the intensity distribution.
pub fn sample_positions<T: Real>(grid: &GridSpec<T>, intensity: &ScalarField<T>, n: usize, seed: u64) -> Result<PositionSample<T>> {
    if n == 0 {
        return Err(Error::Config("need at least one particle".into()));
    }
    Ok(PositionSampler::new(grid, intensity)?.draw(n, &mut stream_rng(seed, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;

    #[test]
    fn degenerate_distribution_puts_everything_in_one_cell() {
        let c = sample_counts(&[0.0, 1.0, 0.0, 0.0], 1000, 3).unwrap();
        assert_eq!(c.n, vec![0, 1000, 0, 0]);
        let c = sample_counts(&[0.0, 0.0, 0.0, 1.0], 7, 3).unwrap();
        assert_eq!(c.n, vec![0, 0, 0, 7]);
    }

    #[test]
    fn draws_are_reproducible_per_stream() {
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(sample_counts(&p, 10_000, 42).unwrap(), sample_counts(&p, 10_000, 42).unwrap());
        let a = sample_counts_with(&p, 10_000, &mut stream_rng(42, 1)).unwrap();
        let b = sample_counts_with(&p, 10_000, &mut stream_rng(42, 2)).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.total, 10_000);
    }

    #[test]
    fn uniform_counts_stay_within_five_sigma() {
        let n = 1_000_000u64;
        let c = sample_counts(&[0.25; 4], n, 7).unwrap();
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        for f in c.frequencies::<f64>() {
            assert!((f - 0.25).abs() < 5.0 * sigma, "{f}");
        }
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        assert!(matches!(sample_counts(&[0.5, 0.6], 10, 1), Err(Error::InvalidProbabilities(_))));
        assert!(matches!(sample_counts(&[1.2, -0.2], 10, 1), Err(Error::InvalidProbabilities(_))));
        assert!(matches!(sample_counts(&[f64::NAN, 1.0], 10, 1), Err(Error::InvalidProbabilities(_))));
        assert!(sample_counts(&[1.0], 0, 1).is_err());
    }

    fn gaussian(grid: &GridSpec<f64>) -> ScalarField<f64> {
        // Unit-variance Gaussian centred at (1, -0.5).
        grid.sample(|x, z| {
            let r2 = (x - 1.0).powi(2) + (z + 0.5).powi(2);
            (-r2 / 2.0).exp() / (2.0 * std::f64::consts::PI)
        })
    }

    #[test]
    fn hits_follow_the_intensity() {
        let g = GridSpec::square(8.0, 64).unwrap();
        let i = gaussian(&g);
        let n = 200_000;
        let hits = sample_positions(&g, &i, n, 11).unwrap();
        assert_eq!(hits.len(), n);

        let mean_x = hits.hits.iter().map(|h| h.0).sum::<f64>() / n as f64;
        let mean_z = hits.hits.iter().map(|h| h.1).sum::<f64>() / n as f64;
        let se = 1.0 / (n as f64).sqrt();
        assert!((mean_x - 1.0).abs() < 5.0 * se && (mean_z + 0.5).abs() < 5.0 * se, "{mean_x} {mean_z}");

        // Pearson chi-square over 8x8 blocks of cells.
        let area = g.cell_area();
        let mut expected = vec![0.0; 64];
        let mut observed = vec![0.0; 64];
        let block = |idx: usize| (idx / g.n_z / 8) * 8 + (idx % g.n_z) / 8;
        for (idx, v) in i.data.iter().enumerate() {
            expected[block(idx)] += v * area * n as f64;
        }
        let total: f64 = expected.iter().sum();
        for e in &mut expected {
            *e *= n as f64 / total;
        }
        for (cell, count) in hits.histogram() {
            observed[block(cell)] += count as f64;
        }
        let (mut chi2, mut dof) = (0.0, 0usize);
        for (o, e) in observed.iter().zip(&expected) {
            if *e > 5.0 {
                chi2 += (o - e) * (o - e) / e;
                dof += 1;
            }
        }
        let dof = (dof - 1) as f64;
        // Mean dof, sd sqrt(2 dof): allow 5 sd.
        assert!(chi2 < dof + 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2} dof {dof}");
    }

    #[test]
    fn histogram_and_coordinates_agree() {
        let g = GridSpec::square(2.0, 4).unwrap();
        let s = PositionSample::from_coordinates(&g, vec![(0.0, 0.0), (0.01, -0.02), (-2.0, -2.0)]).unwrap();
        assert_eq!(s.histogram(), vec![(0, 1), (g.index(2, 2), 2)]);
        assert!(PositionSample::from_coordinates(&g, vec![(5.0, 0.0)]).is_err());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,z\n0,0\n"));
    }

    #[test]
    fn empty_or_negative_intensity_is_rejected() {
        let g = GridSpec::square(1.0, 4).unwrap();
        let zero: ScalarField<f64> = Field::filled(4, 4, 0.0);
        assert!(sample_positions(&g, &zero, 10, 1).is_err());
        let mut neg: ScalarField<f64> = Field::filled(4, 4, 0.25);
        neg.data[3] = -0.1;
        assert!(sample_positions(&g, &neg, 10, 1).is_err());
        assert!(sample_positions(&g, &Field::filled(3, 4, 0.1), 10, 1).is_err());
    }
}
