//! Closed-form peak-depth response used as ground truth.
//!
//! Every cell produces local runoff
//!
//! ```text
//! r = runoff_coef[kind] * max(0, cumulative - infiltration) * g(peak)
//! g(p) = 1 + tanh(p / peak_scale)
//! ```
//!
//! A non-channel cell's peak depth is its own runoff. Non-channel cells drain laterally
//! to the nearest channel cell of their watershed (ties to the lowest id), and channel
//! cells drain along their downstream links. A channel cell `c` with contributing set
//! `U(c)` (every cell whose drainage path passes through `c`) reaches
//!
//! ```text
//! depth(c) = (A_c * r_c + routing_weight * sum_{u in U(c)} A_u * r_u) / (A_c + sum_{u in U(c)} A_u)
//! ```
//!
//! so large-catchment channel cells respond mostly to upstream rainfall. All depths are
//! capped at `depth_cap`.

use serde::{Deserialize, Serialize};

use crate::features::cell_features;
use crate::grid::{CellKind, Grid};
use crate::rainfall::RainfallField;

use super::OracleError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    pub runoff_coef_channel: f64,
    pub runoff_coef_non_channel: f64,
    /// Inches.
    pub infiltration: f64,
    /// Inches per hour.
    pub peak_scale: f64,
    pub routing_weight: f64,
    /// Feet.
    pub depth_cap: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            runoff_coef_channel: 0.9,
            runoff_coef_non_channel: 0.6,
            infiltration: 0.5,
            peak_scale: 1.0,
            routing_weight: 2.0,
            depth_cap: 60.0,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<(), OracleError> {
        let in_unit = |c: f64| c > 0.0 && c <= 1.0;
        if !in_unit(self.runoff_coef_channel) || !in_unit(self.runoff_coef_non_channel) {
            return Err(OracleError::Config("runoff coefficients must be in (0, 1]".into()));
        }
        if !(self.infiltration >= 0.0) || !(self.routing_weight >= 0.0) {
            return Err(OracleError::Config("infiltration and routing_weight must be >= 0".into()));
        }
        if !(self.peak_scale > 0.0) || !(self.depth_cap > 0.0) {
            return Err(OracleError::Config("peak_scale and depth_cap must be > 0".into()));
        }
        Ok(())
    }

    pub fn peak_response(&self, peak: f64) -> f64 {
        1.0 + (peak / self.peak_scale).tanh()
    }

    pub fn local_runoff(&self, kind: CellKind, cumulative: f64, peak: f64) -> f64 {
        let coef = match kind {
            CellKind::Channel => self.runoff_coef_channel,
            CellKind::NonChannel => self.runoff_coef_non_channel,
        };
        coef * (cumulative - self.infiltration).max(0.0) * self.peak_response(peak)
    }
}

/// Drainage routing derived from a grid: lateral targets for non-channel cells and a
/// processing order in which every contributor precedes its receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Drainage {
    /// Receiving cell of each cell, if any.
    pub target: Vec<Option<usize>>,
    /// Every cell, contributors first.
    pub order: Vec<usize>,
}

impl Drainage {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.n_cells();
        let channels_by_ws: Vec<Vec<usize>> = (0..grid.n_watersheds())
            .map(|w| {
                grid.cells
                    .iter()
                    .filter(|c| c.kind == CellKind::Channel && c.watershed.0 == w)
                    .map(|c| c.id.0)
                    .collect()
            })
            .collect();
        let target: Vec<Option<usize>> = grid
            .cells
            .iter()
            .map(|c| match c.kind {
                CellKind::Channel => c.downstream.map(|d| d.0),
                CellKind::NonChannel => {
                    let (cx, cy) = c.centroid;
                    channels_by_ws[c.watershed.0]
                        .iter()
                        .map(|&k| {
                            let (kx, ky) = grid.cells[k].centroid;
                            ((kx - cx).powi(2) + (ky - cy).powi(2), k)
                        })
                        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                        .map(|(_, k)| k)
                }
            })
            .collect();

        // Kahn's algorithm over the drainage forest, smallest ready id first.
        let mut indegree = vec![0usize; n];
        for t in target.iter().flatten() {
            indegree[*t] += 1;
        }
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            if let Some(t) = target[i] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    ready.insert(t);
                }
            }
        }
        debug_assert_eq!(order.len(), n, "validated grids have acyclic drainage");
        Drainage { target, order }
    }

    /// Contributing area (excluding the cell itself) of every cell.
    pub fn contributing_area(&self, grid: &Grid) -> Vec<f64> {
        let mut acc = vec![0.0; self.target.len()];
        for &i in &self.order {
            if let Some(t) = self.target[i] {
                acc[t] += acc[i] + grid.cells[i].area;
            }
        }
        acc
    }
}

/// Peak depth, feet, of every cell for one event.
pub fn simulate_peak_depth(grid: &Grid, field: &RainfallField, params: &OracleParams) -> Result<Vec<f64>, OracleError> {
    simulate_with_drainage(grid, &Drainage::new(grid), field, params)
}

pub fn simulate_with_drainage(
    grid: &Grid,
    drainage: &Drainage,
    field: &RainfallField,
    params: &OracleParams,
) -> Result<Vec<f64>, OracleError> {
    if field.n_cells != grid.n_cells() {
        return Err(OracleError::Dimension(format!(
            "field has {} cells, grid has {}",
            field.n_cells,
            grid.n_cells()
        )));
    }
    let n = grid.n_cells();
    let mut runoff = Vec::with_capacity(n);
    for c in &grid.cells {
        let f = cell_features(field.row(c.id.0)).map_err(|e| OracleError::Dimension(e.to_string()))?;
        runoff.push(params.local_runoff(c.kind, f.cumulative, f.peak));
    }
    // Upstream volume and area, excluding the receiving cell itself.
    let mut volume = vec![0.0; n];
    let mut area = vec![0.0; n];
    for &i in &drainage.order {
        if let Some(t) = drainage.target[i] {
            let a = grid.cells[i].area;
            volume[t] += volume[i] + a * runoff[i];
            area[t] += area[i] + a;
        }
    }
    let depths = grid
        .cells
        .iter()
        .map(|c| {
            let i = c.id.0;
            let d = match c.kind {
                CellKind::NonChannel => runoff[i],
                CellKind::Channel => {
                    (c.area * runoff[i] + params.routing_weight * volume[i]) / (c.area + area[i])
                }
            };
            d.min(params.depth_cap)
        })
        .collect();
    Ok(depths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cell, CellId, WatershedId};

    fn chain_grid() -> Grid {
        // Channel chain 0 -> 1 -> 2 -> 3 -> 4, one watershed, areas 1..5.
        let cells = (0..5)
            .map(|i| Cell {
                id: CellId(i),
                centroid: (i as f64, 0.0),
                area: (i + 1) as f64,
                kind: CellKind::Channel,
                watershed: WatershedId(0),
                downstream: if i < 4 { Some(CellId(i + 1)) } else { None },
            })
            .collect();
        Grid::new(cells, vec!["w".into()]).unwrap()
    }

    #[test]
    fn zero_rain_gives_zero_depth() {
        let g = chain_grid();
        let d = simulate_peak_depth(&g, &RainfallField::zeros(5, 4), &OracleParams::default()).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn five_cell_chain_closed_form() {
        let g = chain_grid();
        let p = OracleParams::default();
        // Only cell 0 (area 1) gets rain: 2 in over one hour.
        let mut rows = vec![vec![0.0; 2]; 5];
        rows[0][0] = 2.0;
        let field = RainfallField::from_rows(rows).unwrap();
        let d = simulate_peak_depth(&g, &field, &p).unwrap();
        let r0 = 0.9 * (2.0 - 0.5) * (1.0 + 2.0f64.tanh());
        assert_eq!(d[0], r0);
        // Cell k > 0 has no local rain and upstream area 1 + 2 + ... + k.
        for k in 1..5 {
            let upstream_area = (1..=k).map(|a| a as f64).sum::<f64>();
            let expected = (2.0 * 1.0 * r0) / ((k + 1) as f64 + upstream_area);
            assert!((d[k] - expected).abs() < 1e-12, "cell {k}: {} vs {expected}", d[k]);
            assert!(d[k] > 0.0);
        }
    }

    #[test]
    fn lateral_targets_stay_in_watershed() {
        let mk = |i: usize, x: f64, kind: CellKind, w: usize| Cell {
            id: CellId(i),
            centroid: (x, 0.0),
            area: 1.0,
            kind,
            watershed: WatershedId(w),
            downstream: None,
        };
        let g = Grid::new(
            vec![
                mk(0, 0.0, CellKind::Channel, 0),
                mk(1, 1.0, CellKind::NonChannel, 0),
                mk(2, 2.0, CellKind::NonChannel, 1),
                mk(3, 3.0, CellKind::Channel, 0),
                mk(4, 2.0, CellKind::NonChannel, 0),
            ],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let d = Drainage::new(&g);
        // Cell 1 is nearest channel 0, cell 4 nearest channel 3; watershed 1 has no channel.
        assert_eq!(d.target, vec![None, Some(0), None, None, Some(3)]);
        assert_eq!(d.contributing_area(&g), vec![1.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn non_channel_depth_is_local() {
        let g = chain_grid();
        let p = OracleParams::default();
        assert_eq!(p.local_runoff(CellKind::NonChannel, 0.4, 3.0), 0.0);
        let v = p.local_runoff(CellKind::NonChannel, 3.0, 1.0);
        assert_eq!(v, 0.6 * 2.5 * (1.0 + 1.0f64.tanh()));
        assert!(simulate_peak_depth(&g, &RainfallField::zeros(4, 1), &p).is_err());
    }
}
