//! Mesh geometry, xy routing and temperature down-sampling.
//!
//! Tiles are numbered row-major from the top-left corner; tile `i` sits at
//! column `i % cols`, row `i / cols`, with unit spacing between neighbours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the chip plane, in tile widths (`x` = column, `y` = row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mesh {
    rows: usize,
    cols: usize,
}

/// Routers visited by a packet, source first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route(Vec<usize>);

impl Route {
    pub fn routers(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, router: usize) -> bool {
        self.0.contains(&router)
    }

    pub fn source(&self) -> usize {
        self.0[0]
    }

    pub fn destination(&self) -> usize {
        *self.0.last().expect("routes are never empty")
    }
}

impl Mesh {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidMesh { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of tiles (cores, routers and sensors).
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check(&self, tile: usize) -> Result<()> {
        if tile < self.len() {
            Ok(())
        } else {
            Err(Error::OutOfRange { index: tile, len: self.len() })
        }
    }

    /// `(column, row)` of a tile.
    pub fn col_row(&self, tile: usize) -> (usize, usize) {
        (tile % self.cols, tile / self.cols)
    }

    pub fn tile_at(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn position(&self, tile: usize) -> Point {
        let (c, r) = self.col_row(tile);
        Point::new(c as f64, r as f64)
    }

    pub fn center(&self) -> Point {
        Point::new((self.cols - 1) as f64 / 2.0, (self.rows - 1) as f64 / 2.0)
    }

    /// Corner-to-corner length, the largest distance between two tiles.
    pub fn diagonal(&self) -> f64 {
        ((self.cols - 1) as f64).hypot((self.rows - 1) as f64)
    }

    /// Lateral neighbours (north, west, east, south order).
    pub fn neighbors(&self, tile: usize) -> impl Iterator<Item = usize> + '_ {
        let (c, r) = self.col_row(tile);
        let north = (r > 0).then(|| self.tile_at(c, r - 1));
        let west = (c > 0).then(|| self.tile_at(c - 1, r));
        let east = (c + 1 < self.cols).then(|| self.tile_at(c + 1, r));
        let south = (r + 1 < self.rows).then(|| self.tile_at(c, r + 1));
        [north, west, east, south].into_iter().flatten()
    }

    /// Number of chip edges the tile touches (0 inside, 1 on an edge, 2 in a corner).
    pub fn boundary_sides(&self, tile: usize) -> usize {
        4 - self.neighbors(tile).count()
    }

    pub fn corners(&self) -> [usize; 4] {
        [
            0,
            self.cols - 1,
            self.tile_at(0, self.rows - 1),
            self.len() - 1,
        ]
    }

    /// Tiles that touch no chip edge.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.len()).filter(|&t| self.boundary_sides(t) == 0).collect()
    }

    /// Dimension-ordered route: along the row to the destination column, then
    /// along the column to the destination row.
    pub fn xy_route(&self, src: usize, dst: usize) -> Result<Route> {
        self.check(src)?;
        self.check(dst)?;
        let (sc, sr) = self.col_row(src);
        let (dc, dr) = self.col_row(dst);
        let mut hops = Vec::with_capacity(sc.abs_diff(dc) + sr.abs_diff(dr) + 1);
        let mut c = sc;
        hops.push(self.tile_at(c, sr));
        while c != dc {
            c = if dc > c { c + 1 } else { c - 1 };
            hops.push(self.tile_at(c, sr));
        }
        let mut r = sr;
        while r != dr {
            r = if dr > r { r + 1 } else { r - 1 };
            hops.push(self.tile_at(dc, r));
        }
        Ok(Route(hops))
    }

    pub fn dist_from_point(&self, tile: usize, point: Point) -> Result<f64> {
        self.check(tile)?;
        Ok(self.position(tile).distance(&point))
    }

    /// Bilinear down-sampling of a per-core field to a 3×3 grid.
    ///
    /// Samples sit at normalized chip coordinates `{0, ½, 1}²`, mapped onto
    /// `[0, cols−1] × [0, rows−1]`; the result is row-major.
    pub fn interpolate_grid(&self, core_temps: &[f64]) -> Result<[f64; 9]> {
        if core_temps.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: core_temps.len() });
        }
        let mut out = [0.0; 9];
        let xmax = (self.cols - 1) as f64;
        let ymax = (self.rows - 1) as f64;
        for (j, v) in [0.0, 0.5, 1.0].into_iter().enumerate() {
            for (i, u) in [0.0, 0.5, 1.0].into_iter().enumerate() {
                out[j * 3 + i] = self.bilinear(core_temps, u * xmax, v * ymax);
            }
        }
        Ok(out)
    }

    fn bilinear(&self, field: &[f64], x: f64, y: f64) -> f64 {
        let c0 = (x.floor() as usize).min(self.cols - 2);
        let r0 = (y.floor() as usize).min(self.rows - 2);
        let fx = x - c0 as f64;
        let fy = y - r0 as f64;
        let z00 = field[self.tile_at(c0, r0)];
        let z10 = field[self.tile_at(c0 + 1, r0)];
        let z01 = field[self.tile_at(c0, r0 + 1)];
        let z11 = field[self.tile_at(c0 + 1, r0 + 1)];
        let top = z00 + (z10 - z00) * fx;
        let bottom = z01 + (z11 - z01) * fx;
        top + (bottom - top) * fy
    }
}
