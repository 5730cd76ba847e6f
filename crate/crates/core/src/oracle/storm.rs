//! Seeded storm generator: each event is a sum of Gaussian space-time rain kernels.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::rainfall::RainfallField;

use super::OracleError;

/// Inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T> Range<T> {
    pub const fn new(min: T, max: T) -> Self {
        Range { min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StormConfig {
    pub n_events: usize,
    pub hours: Range<usize>,
    pub centers: Range<usize>,
    /// Kernel radius (Gaussian standard deviation), feet. Sampled log-uniformly so the
    /// corpus spans localized cells to near-uniform storms.
    pub radius: Range<f64>,
    /// Kernel peak intensity, inches per hour.
    pub intensity: Range<f64>,
    /// Kernel temporal standard deviation, hours.
    pub kernel_hours: Range<f64>,
    /// Share of events forced to zero rainfall.
    #[serde(default)]
    pub null_fraction: f64,
    pub seed: u64,
}

impl Default for StormConfig {
    fn default() -> Self {
        StormConfig {
            n_events: 200,
            hours: Range::new(12, 36),
            centers: Range::new(1, 4),
            radius: Range::new(2_000.0, 200_000.0),
            intensity: Range::new(0.0, 2.5),
            kernel_hours: Range::new(1.0, 5.0),
            null_fraction: 0.03,
            seed: 17,
        }
    }
}

impl StormConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::Config(m.to_string()));
        if self.n_events == 0 {
            return bad("n_events must be >= 1");
        }
        if self.hours.min == 0 || self.hours.min > self.hours.max {
            return bad("hours range must be non-empty and start at >= 1");
        }
        if self.centers.min > self.centers.max {
            return bad("centers range is empty");
        }
        for (name, r) in [
            ("radius", self.radius),
            ("intensity", self.intensity),
            ("kernel_hours", self.kernel_hours),
        ] {
            if !(r.min >= 0.0) || !(r.min <= r.max) || !r.max.is_finite() {
                return Err(OracleError::Config(format!("{name} range must be non-empty and non-negative")));
            }
        }
        if !(self.radius.min > 0.0) || !(self.kernel_hours.min > 0.0) {
            return bad("radius and kernel_hours must be > 0");
        }
        if !(0.0..=1.0).contains(&self.null_fraction) {
            return bad("null_fraction must be in [0, 1]");
        }
        Ok(())
    }
}

/// Independent generator stream for one event.
pub fn event_seed(seed: u64, event: u64) -> u64 {
    splitmix64(seed ^ splitmix64(event.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub center: (f64, f64),
    pub radius: f64,
    pub intensity: f64,
    pub peak_hour: f64,
    pub width_hours: f64,
}

fn uniform(rng: &mut ChaCha8Rng, r: Range<f64>) -> f64 {
    if r.max > r.min {
        rng.gen_range(r.min..=r.max)
    } else {
        r.min
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, r: Range<f64>) -> f64 {
    if r.max > r.min {
        (rng.gen_range(r.min.ln()..=r.max.ln())).exp()
    } else {
        r.min
    }
}

/// Samples the kernels and duration of one event.
pub fn sample_event(grid: &Grid, config: &StormConfig, event: usize) -> (usize, Vec<Kernel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(event_seed(config.seed, event as u64));
    let n_hours = rng.gen_range(config.hours.min..=config.hours.max);
    let is_null = rng.gen::<f64>() < config.null_fraction;
    let n_centers = rng.gen_range(config.centers.min..=config.centers.max);
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in &grid.cells {
        x0 = x0.min(c.centroid.0);
        y0 = y0.min(c.centroid.1);
        x1 = x1.max(c.centroid.0);
        y1 = y1.max(c.centroid.1);
    }
    let kernels = (0..n_centers)
        .map(|_| Kernel {
            center: (uniform(&mut rng, Range::new(x0, x1)), uniform(&mut rng, Range::new(y0, y1))),
            radius: log_uniform(&mut rng, config.radius),
            intensity: if is_null { 0.0 } else { uniform(&mut rng, config.intensity) },
            peak_hour: uniform(&mut rng, Range::new(0.0, n_hours as f64)),
            width_hours: uniform(&mut rng, config.kernel_hours),
        })
        .collect();
    (n_hours, kernels)
}

/// Hourly field from kernels; each hour is evaluated at its midpoint.
pub fn render_field(grid: &Grid, n_hours: usize, kernels: &[Kernel]) -> RainfallField {
    let mut field = RainfallField::zeros(grid.n_cells(), n_hours);
    for c in &grid.cells {
        let row = field.row_mut(c.id.0);
        for k in kernels {
            if k.intensity == 0.0 {
                continue;
            }
            let dx = c.centroid.0 - k.center.0;
            let dy = c.centroid.1 - k.center.1;
            let spatial = k.intensity * (-(dx * dx + dy * dy) / (2.0 * k.radius * k.radius)).exp();
            for (h, v) in row.iter_mut().enumerate() {
                let dt = h as f64 + 0.5 - k.peak_hour;
                *v += spatial * (-(dt * dt) / (2.0 * k.width_hours * k.width_hours)).exp();
            }
        }
        for v in row.iter_mut() {
            *v = v.max(0.0);
        }
    }
    field
}

pub fn generate_events(grid: &Grid, config: &StormConfig) -> Result<Vec<RainfallField>, OracleError> {
    config.validate()?;
    if grid.n_cells() == 0 {
        return Err(OracleError::DegenerateGrid);
    }
    Ok((0..config.n_events)
        .map(|e| {
            let (n_hours, kernels) = sample_event(grid, config, e);
            render_field(grid, n_hours, &kernels)
        })
        .collect())
}
