//! Image exports: tiled filter maps and lattice label maps.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::plasticity::Connection;
use crate::pnm::Image;
use crate::scalar::Scalar;

/// Per-tile min-max stretch to `0..=255`. Constant tiles map to black.
pub fn display_normalize(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect()
}

/// Tiles each neuron's incoming weights (an `height x width` filter) in
/// lattice order with 1-pixel black separators.
///
/// The result is `side*(width+1)-1` pixels wide and `side*(height+1)-1` high.
pub fn filter_map<F: Scalar>(input: &Connection<F>, lattice: &Lattice, height: usize, width: usize) -> Result<Image> {
    if input.n_pre() != height * width {
        return Err(Error::Shape(format!(
            "filters have {} weights, cannot reshape to {height}x{width}",
            input.n_pre()
        )));
    }
    if input.n_post() != lattice.len() {
        return Err(Error::Shape(format!(
            "{} filters for a lattice of {}",
            input.n_post(),
            lattice.len()
        )));
    }
    let side = lattice.side();
    let img_w = side * (width + 1) - 1;
    let img_h = side * (height + 1) - 1;
    let mut data = vec![0u8; img_w * img_h];
    for j in 0..input.n_post() {
        let col: Vec<f64> = input.column(j).iter().map(|w| w.to_f64_lossy()).collect();
        let tile = display_normalize(&col);
        let (cx, cy) = lattice.position(j);
        let (x0, y0) = (cx * (width + 1), cy * (height + 1));
        for r in 0..height {
            let row = &tile[r * width..(r + 1) * width];
            let at = (y0 + r) * img_w + x0;
            data[at..at + width].copy_from_slice(row);
        }
    }
    Image::gray(img_w, img_h, data)
}

/// Extracts tile `neuron` from a filter map produced by [`filter_map`].
pub fn tile(map: &Image, lattice: &Lattice, neuron: usize, height: usize, width: usize) -> Vec<u8> {
    let (cx, cy) = lattice.position(neuron);
    let (x0, y0) = (cx * (width + 1), cy * (height + 1));
    (0..height)
        .flat_map(|r| {
            let at = (y0 + r) * map.width + x0;
            map.data[at..at + width].to_vec()
        })
        .collect()
}

/// Distinct colors for up to ten classes; further classes cycle.
pub const CLASS_COLORS: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

/// One `cell x cell` block per neuron colored by its label; unlabeled neurons are black.
pub fn assignment_map(labels: &[Option<usize>], lattice: &Lattice, cell: usize) -> Result<Image> {
    if labels.len() != lattice.len() {
        return Err(Error::Shape(format!(
            "{} labels for a lattice of {}",
            labels.len(),
            lattice.len()
        )));
    }
    let cell = cell.max(1);
    let w = lattice.side() * cell;
    let mut data = vec![0u8; w * w * 3];
    for (j, l) in labels.iter().enumerate() {
        let color = l.map_or([0, 0, 0], |c| CLASS_COLORS[c % CLASS_COLORS.len()]);
        let (cx, cy) = lattice.position(j);
        for y in cy * cell..(cy + 1) * cell {
            for x in cx * cell..(cx + 1) * cell {
                let at = (y * w + x) * 3;
                data[at..at + 3].copy_from_slice(&color);
            }
        }
    }
    Image::rgb(w, w, data)
}
