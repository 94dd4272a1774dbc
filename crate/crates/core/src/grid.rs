//! Flat lat/lon grid over a bounding box.
//!
//! Rows run along latitude (row 0 at `lat_min`), columns along longitude
//! (col 0 at `lon_min`). Cells are half-open `[lo, hi)` on both axes except
//! along the maximum edges, which belong to the last row/column.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CELLS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub row: usize,
    pub col: usize,
}

impl CellId {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellBounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl CellBounds {
    pub fn area(&self) -> f64 {
        (self.lat_max - self.lat_min) * (self.lon_max - self.lon_min)
    }
}

impl GridSpec {
    /// Greater Pittsburgh, 16x16.
    pub const PITTSBURGH: GridSpec = GridSpec {
        lat_min: 40.40,
        lat_max: 40.50,
        lon_min: -80.05,
        lon_max: -79.85,
        rows: 16,
        cols: 16,
    };

    pub fn new(lat: (f64, f64), lon: (f64, f64), rows: usize, cols: usize) -> Result<Self> {
        let spec = Self {
            lat_min: lat.0,
            lat_max: lat.1,
            lon_min: lon.0,
            lon_max: lon.1,
            rows,
            cols,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Preset region with different dimensions.
    pub fn pittsburgh(rows: usize, cols: usize) -> Result<Self> {
        let spec = Self {
            rows,
            cols,
            ..Self::PITTSBURGH
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidSpec("bounds must be finite".into()));
        }
        if self.lat_min >= self.lat_max {
            return Err(Error::InvalidSpec("lat_min must be < lat_max".into()));
        }
        if self.lon_min >= self.lon_max {
            return Err(Error::InvalidSpec("lon_min must be < lon_max".into()));
        }
        if self.rows == 0 {
            return Err(Error::InvalidSpec("rows must be >= 1".into()));
        }
        if self.cols == 0 {
            return Err(Error::InvalidSpec("cols must be >= 1".into()));
        }
        match self.rows.checked_mul(self.cols) {
            Some(n) if n <= MAX_CELLS => Ok(()),
            _ => Err(Error::InvalidSpec(format!(
                "rows * cols must be <= {MAX_CELLS}"
            ))),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major index of `cell`.
    pub fn index_of(&self, cell: CellId) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn cell_at(&self, index: usize) -> CellId {
        CellId::new(index / self.cols, index % self.cols)
    }

    pub fn contains_cell(&self, cell: CellId) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    fn lat_edge(&self, i: usize) -> f64 {
        if i == self.rows {
            self.lat_max
        } else {
            self.lat_min + (self.lat_max - self.lat_min) * i as f64 / self.rows as f64
        }
    }

    fn lon_edge(&self, j: usize) -> f64 {
        if j == self.cols {
            self.lon_max
        } else {
            self.lon_min + (self.lon_max - self.lon_min) * j as f64 / self.cols as f64
        }
    }

    pub fn bounds(&self, cell: CellId) -> CellBounds {
        CellBounds {
            lat_min: self.lat_edge(cell.row),
            lat_max: self.lat_edge(cell.row + 1),
            lon_min: self.lon_edge(cell.col),
            lon_max: self.lon_edge(cell.col + 1),
        }
    }
}

/// Every cell of the grid with its bounds, row-major.
pub fn build_grid(spec: &GridSpec) -> Result<Vec<(CellId, CellBounds)>> {
    spec.validate()?;
    Ok((0..spec.cell_count())
        .map(|i| {
            let cell = spec.cell_at(i);
            (cell, spec.bounds(cell))
        })
        .collect())
}

fn axis_index(v: f64, lo: f64, hi: f64, n: usize, edge: impl Fn(usize) -> f64) -> usize {
    let guess = ((v - lo) / (hi - lo) * n as f64).floor();
    let mut i = if guess < 0.0 { 0 } else { (guess as usize).min(n - 1) };
    // Snap to the computed edges so locate agrees with `bounds` bit-for-bit.
    while i > 0 && v < edge(i) {
        i -= 1;
    }
    while i + 1 < n && v >= edge(i + 1) {
        i += 1;
    }
    i
}

/// Cell containing `(lat, lon)` under the half-open boundary rule.
pub fn locate(spec: &GridSpec, lat: f64, lon: f64) -> Result<CellId> {
    spec.validate()?;
    let inside = (spec.lat_min..=spec.lat_max).contains(&lat)
        && (spec.lon_min..=spec.lon_max).contains(&lon);
    if !inside {
        return Err(Error::OutOfBounds { lat, lon });
    }
    let row = axis_index(lat, spec.lat_min, spec.lat_max, spec.rows, |i| spec.lat_edge(i));
    let col = axis_index(lon, spec.lon_min, spec.lon_max, spec.cols, |j| spec.lon_edge(j));
    Ok(CellId::new(row, col))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(rows: usize, cols: usize) -> GridSpec {
        GridSpec::new((0.0, 1.0), (0.0, 1.0), rows, cols).unwrap()
    }

    /// Linear search using the boundary rule directly on cell bounds.
    fn containing_cell(spec: &GridSpec, lat: f64, lon: f64) -> Option<CellId> {
        build_grid(spec).unwrap().into_iter().find_map(|(cell, b)| {
            let in_lat = b.lat_min <= lat
                && (lat < b.lat_max || (cell.row == spec.rows - 1 && lat <= b.lat_max));
            let in_lon = b.lon_min <= lon
                && (lon < b.lon_max || (cell.col == spec.cols - 1 && lon <= b.lon_max));
            (in_lat && in_lon).then_some(cell)
        })
    }

    #[test]
    fn single_cell_covers_box() {
        let spec = GridSpec::new((1.0, 2.0), (3.0, 5.0), 1, 1).unwrap();
        let cells = build_grid(&spec).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(
            cells[0].1,
            CellBounds { lat_min: 1.0, lat_max: 2.0, lon_min: 3.0, lon_max: 5.0 }
        );
    }

    #[test]
    fn two_by_two_partition() {
        let cells = build_grid(&unit(2, 2)).unwrap();
        assert_eq!(cells.len(), 4);
        for (_, b) in &cells {
            assert_eq!(b.lat_max - b.lat_min, 0.5);
            assert_eq!(b.lon_max - b.lon_min, 0.5);
        }
        assert_eq!(cells[1].0, CellId::new(0, 1));
        assert_eq!(cells[1].1.lon_min, 0.5);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = unit(1, 1);
        s.rows = 0;
        assert!(matches!(build_grid(&s), Err(Error::InvalidSpec(_))));
        s = unit(1, 1);
        s.cols = 0;
        assert!(s.validate().is_err());
        assert!(GridSpec::new((1.0, 1.0), (0.0, 1.0), 1, 1).is_err());
        assert!(GridSpec::new((0.0, 1.0), (2.0, 1.0), 1, 1).is_err());
        assert!(GridSpec::new((0.0, 1.0), (0.0, 1.0), 1001, 1000).is_err());
        assert!(GridSpec::new((0.0, 1.0), (0.0, 1.0), 1000, 1000).is_ok());
    }

    #[test]
    fn locate_boundary_rule() {
        let s = unit(2, 2);
        assert_eq!(locate(&s, 0.5, 0.5).unwrap(), CellId::new(1, 1));
        assert_eq!(locate(&s, 0.0, 0.0).unwrap(), CellId::new(0, 0));
        assert_eq!(locate(&s, 1.0, 1.0).unwrap(), CellId::new(1, 1));
        assert_eq!(locate(&s, 1.0, 0.0).unwrap(), CellId::new(1, 0));
        assert!(matches!(locate(&s, 1.5, 0.5), Err(Error::OutOfBounds { .. })));
        assert!(locate(&s, 0.5, -0.01).is_err());
    }

    #[test]
    fn preset_areas_sum_to_box() {
        let s = GridSpec::PITTSBURGH;
        let total: f64 = build_grid(&s).unwrap().iter().map(|(_, b)| b.area()).sum();
        let want = (s.lat_max - s.lat_min) * (s.lon_max - s.lon_min);
        assert!(((total - want) / want).abs() < 1e-9);
    }

    #[test]
    fn adjacent_cells_share_edges() {
        let s = GridSpec::PITTSBURGH;
        for r in 0..s.rows {
            for c in 0..s.cols - 1 {
                let a = s.bounds(CellId::new(r, c));
                let b = s.bounds(CellId::new(r, c + 1));
                assert_eq!(a.lon_max, b.lon_min);
            }
        }
        for r in 0..s.rows - 1 {
            let a = s.bounds(CellId::new(r, 0));
            let b = s.bounds(CellId::new(r + 1, 0));
            assert_eq!(a.lat_max, b.lat_min);
        }
    }

    proptest! {
        #[test]
        fn locate_matches_exhaustive_search(
            rows in 1usize..20,
            cols in 1usize..20,
            fy in 0.0f64..=1.0,
            fx in 0.0f64..=1.0,
        ) {
            let s = GridSpec { rows, cols, ..GridSpec::PITTSBURGH };
            let lat = s.lat_min + fy * (s.lat_max - s.lat_min);
            let lon = s.lon_min + fx * (s.lon_max - s.lon_min);
            let lat = lat.clamp(s.lat_min, s.lat_max);
            let lon = lon.clamp(s.lon_min, s.lon_max);
            prop_assert_eq!(Some(locate(&s, lat, lon).unwrap()), containing_cell(&s, lat, lon));
        }

        #[test]
        fn locate_on_cell_edges(rows in 1usize..12, cols in 1usize..12, r in 0usize..12, c in 0usize..12) {
            let s = GridSpec { rows, cols, ..GridSpec::PITTSBURGH };
            let cell = CellId::new(r % rows, c % cols);
            let b = s.bounds(cell);
            prop_assert_eq!(locate(&s, b.lat_min, b.lon_min).unwrap(), cell);
        }
    }
}
