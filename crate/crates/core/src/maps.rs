//! Per-pixel image maps: azimuth observations, silhouettes, normals and depth.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Row-major image of `width * height` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: u32, height: u32, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: u32, height: u32, data: Vec<T>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} grid needs {} cells, got {}",
                width,
                height,
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    fn index(&self, col: u32, row: u32) -> usize {
        assert!(col < self.width && row < self.height, "pixel out of range");
        row as usize * self.width as usize + col as usize
    }

    pub fn get(&self, col: u32, row: u32) -> &T {
        &self.data[self.index(col, row)]
    }

    pub fn set(&mut self, col: u32, row: u32, value: T) {
        let i = self.index(col, row);
        self.data[i] = value;
    }

    /// `(col, row, value)` in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| ((i as u32) % w, (i as u32) / w, v))
    }
}

/// Binary occupancy mask.
pub type SilhouetteMask = Grid<bool>;
/// World-frame unit normals; `None` where nothing was observed.
pub type NormalMap = Grid<Option<Vec3>>;
/// Ray parameter of the first surface hit; `None` on background.
pub type DepthMap = Grid<Option<f64>>;

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    /// Binary dilation with a 3x3 square structuring element, applied `iterations` times.
    pub fn dilate(&self, iterations: u32) -> Self {
        let mut current = self.clone();
        let (w, h) = (self.width as i64, self.height as i64);
        for _ in 0..iterations {
            let mut next = current.clone();
            for row in 0..h {
                for col in 0..w {
                    if *current.get(col as u32, row as u32) {
                        continue;
                    }
                    let hit = (-1..=1).any(|dr| {
                        (-1..=1).any(|dc| {
                            let (c, r) = (col + dc, row + dr);
                            c >= 0 && r >= 0 && c < w && r < h && *current.get(c as u32, r as u32)
                        })
                    });
                    if hit {
                        next.set(col as u32, row as u32, true);
                    }
                }
            }
            if next == current {
                break;
            }
            current = next;
        }
        current
    }
}

/// Per-pixel azimuth angles in `[0, 2π)`; NaN marks pixels without a valid azimuth.
#[derive(Debug, Clone, PartialEq)]
pub struct AzimuthMap {
    grid: Grid<f64>,
}

impl AzimuthMap {
    pub fn invalid(width: u32, height: u32) -> Self {
        Self {
            grid: Grid::filled(width, height, f64::NAN),
        }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values
            .iter()
            .find(|v| !v.is_nan() && !(0.0..TAU).contains(*v))
        {
            return Err(Error::ShapeMismatch(format!("azimuth {v} outside [0, 2π)")));
        }
        Ok(Self {
            grid: Grid::from_vec(width, height, values)?,
        })
    }

    pub fn width(&self) -> u32 {
        self.grid.width
    }

    pub fn height(&self) -> u32 {
        self.grid.height
    }

    pub fn dims(&self) -> (u32, u32) {
        self.grid.dims()
    }

    /// Raw values including NaN markers.
    pub fn values(&self) -> &[f64] {
        &self.grid.data
    }

    pub fn get(&self, col: u32, row: u32) -> Option<f64> {
        let v = *self.grid.get(col, row);
        (!v.is_nan()).then_some(v)
    }

    /// Stores an azimuth (wrapped into `[0, 2π)`) or clears the pixel.
    pub fn set(&mut self, col: u32, row: u32, value: Option<f64>) {
        let v = value.map_or(f64::NAN, crate::geom::wrap_angle);
        self.grid.set(col, row, v);
    }

    pub fn valid_count(&self) -> usize {
        self.grid.data.iter().filter(|v| !v.is_nan()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dilation_grows_square_neighbourhoods() {
        let mut mask = SilhouetteMask::filled(9, 9, false);
        mask.set(4, 4, true);
        assert_eq!(mask.dilate(1).count(), 9);
        assert_eq!(mask.dilate(2).count(), 25);
        assert_eq!(mask.dilate(30).count(), 81);
        assert_eq!(SilhouetteMask::filled(5, 5, false).dilate(3).count(), 0);
    }

    #[test]
    fn azimuth_map_rejects_out_of_range() {
        assert!(AzimuthMap::from_values(1, 1, vec![TAU]).is_err());
        assert!(AzimuthMap::from_values(1, 1, vec![-0.1]).is_err());
        let map = AzimuthMap::from_values(2, 1, vec![f64::NAN, 1.0]).unwrap();
        assert_eq!(map.get(0, 0), None);
        assert_eq!(map.get(1, 0), Some(1.0));
        assert_eq!(map.valid_count(), 1);
    }

    #[test]
    fn set_wraps_angles() {
        let mut map = AzimuthMap::invalid(1, 1);
        map.set(0, 0, Some(TAU + 0.5));
        assert!((map.get(0, 0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_wrong_length() {
        assert!(Grid::from_vec(2, 2, vec![0u8; 3]).is_err());
    }
}
