//! Regular test grids with block watersheds and a channel network.

use serde::{Deserialize, Serialize};

use crate::grid::{Cell, CellId, CellKind, Grid, GridError, WatershedId};

/// A `nx` by `ny` grid of square cells split into block watersheds.
///
/// The channel network is a main stem along the middle row flowing toward +x, fed by
/// tributaries that branch off the stem above and below at the centre of each
/// watershed column. Tributary lengths are chosen so that roughly `channel_fraction` of the cells
/// are channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Cell edge, feet.
    pub spacing: f64,
    pub watersheds_x: usize,
    pub watersheds_y: usize,
    pub channel_fraction: f64,
}

impl Default for SyntheticGridSpec {
    fn default() -> Self {
        SyntheticGridSpec {
            nx: 20,
            ny: 20,
            spacing: 1200.0,
            watersheds_x: 3,
            watersheds_y: 3,
            channel_fraction: 0.10,
        }
    }
}

fn block_of(i: usize, n: usize, blocks: usize) -> usize {
    (i * blocks / n).min(blocks - 1)
}

pub fn build_synthetic_grid(spec: &SyntheticGridSpec) -> Result<Grid, GridError> {
    let SyntheticGridSpec {
        nx,
        ny,
        spacing,
        watersheds_x,
        watersheds_y,
        channel_fraction,
    } = *spec;
    if nx == 0 || ny == 0 || watersheds_x == 0 || watersheds_y == 0 || watersheds_x > nx || watersheds_y > ny {
        return Err(GridError::Invalid(format!("unusable synthetic grid shape {spec:?}")));
    }
    if !(spacing > 0.0) || !(0.0..=1.0).contains(&channel_fraction) {
        return Err(GridError::Invalid("spacing must be > 0 and channel_fraction in [0, 1]".into()));
    }
    let idx = |x: usize, y: usize| y * nx + x;
    let mut kind = vec![CellKind::NonChannel; nx * ny];
    let mut downstream: Vec<Option<usize>> = vec![None; nx * ny];

    let target = (channel_fraction * (nx * ny) as f64).round() as usize;
    if target > 0 {
        let stem_y = ny / 2;
        let stem_len = nx.min(target);
        // The stem ends at the +x edge; it starts further in when the budget is small.
        for x in nx - stem_len..nx {
            kind[idx(x, stem_y)] = CellKind::Channel;
            if x + 1 < nx {
                downstream[idx(x, stem_y)] = Some(idx(x + 1, stem_y));
            }
        }
        // One tributary above and one below the stem in every watershed column, at the
        // column's centre, growing outward from the stem.
        let mut arms: Vec<(usize, bool)> = Vec::new();
        for b in 0..watersheds_x {
            let x0 = b * nx / watersheds_x;
            let x1 = (b + 1) * nx / watersheds_x;
            let x = (x0 + x1) / 2;
            if x >= nx - stem_len {
                arms.push((x, true));
                arms.push((x, false));
            }
        }
        let mut remaining = target - stem_len;
        let mut lengths = vec![0usize; arms.len()];
        let max_len = |up: bool| if up { ny - 1 - stem_y } else { stem_y };
        // First let arms reach the outer watershed rows one at a time, then share the
        // rest round-robin.
        let reach = |up: bool| {
            let outer = if up { watersheds_y - 1 } else { 0 };
            (0..ny)
                .filter(|&y| block_of(y, ny, watersheds_y) == outer)
                .map(|y| y.abs_diff(stem_y))
                .min()
                .unwrap_or(0)
                .min(max_len(up))
        };
        for (a, &(_, up)) in arms.iter().enumerate() {
            let take = reach(up).min(remaining);
            lengths[a] = take;
            remaining -= take;
        }
        let mut progressed = true;
        while remaining > 0 && progressed {
            progressed = false;
            for (a, &(_, up)) in arms.iter().enumerate() {
                if remaining > 0 && lengths[a] < max_len(up) {
                    lengths[a] += 1;
                    remaining -= 1;
                    progressed = true;
                }
            }
        }
        for (a, &(x, up)) in arms.iter().enumerate() {
            let mut below = idx(x, stem_y);
            for step in 1..=lengths[a] {
                let y = if up { stem_y + step } else { stem_y - step };
                let c = idx(x, y);
                kind[c] = CellKind::Channel;
                downstream[c] = Some(below);
                below = c;
            }
        }
    }

    let mut cells = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            let id = idx(x, y);
            let w = block_of(y, ny, watersheds_y) * watersheds_x + block_of(x, nx, watersheds_x);
            cells.push(Cell {
                id: CellId(id),
                centroid: ((x as f64 + 0.5) * spacing, (y as f64 + 0.5) * spacing),
                area: spacing * spacing,
                kind: kind[id],
                watershed: WatershedId(w),
                downstream: downstream[id].map(CellId),
            });
        }
    }
    let names = (0..watersheds_x * watersheds_y).map(|w| format!("watershed_{w}")).collect();
    Grid::new(cells, names)
}
