//! Two-level spatial pyramid over grid cells and the full DSP encoding.
//!
//! Level 0 is the whole grid. Level 1 holds the four quadrants (split at
//! `ceil(h/2)`, `ceil(w/2)`) followed by a centered block of
//! `ceil(h/2) x ceil(w/2)` cells starting at `(floor(h/4), floor(w/4))`,
//! which overlaps the quadrants.

use crate::error::{ensure, Result};
use crate::fisher::{improved_fv, l2_normalize};
use crate::gmm::GmmModel;
use crate::grid::{DescriptorGrid, NormalizationMode};

/// Half-open cell rectangle `[row_start, row_end) x [col_start, col_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Region {
    pub fn rows(&self) -> usize {
        self.row_end - self.row_start
    }

    pub fn cols(&self) -> usize {
        self.col_end - self.col_start
    }

    pub fn cells(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_start..self.row_end).contains(&row) && (self.col_start..self.col_end).contains(&col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidLayout {
    h: usize,
    w: usize,
    levels: usize,
    regions: Vec<Region>,
}

impl PyramidLayout {
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Regions in encoding order: whole grid, then NW, NE, SW, SE, center.
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Number of regions `m`.
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// Length of a DSP vector built on this layout: `2 m d K`.
    pub fn encoded_len(&self, d: usize, k: usize) -> usize {
        2 * self.len() * d * k
    }
}

pub fn build_layout(h: usize, w: usize, levels: usize) -> Result<PyramidLayout> {
    ensure!(h >= 1 && w >= 1, Validation, "grid must be non-empty, got {h}x{w}");
    ensure!(
        levels == 1 || levels == 2,
        Validation,
        "pyramid levels must be 1 or 2, got {levels}"
    );
    let whole = Region {
        row_start: 0,
        row_end: h,
        col_start: 0,
        col_end: w,
    };
    let mut regions = vec![whole];
    if levels == 2 {
        ensure!(
            h >= 2 && w >= 2,
            Validation,
            "a two-level pyramid needs at least a 2x2 grid, got {h}x{w}; use one level"
        );
        let r = h.div_ceil(2);
        let c = w.div_ceil(2);
        let rect = |row_start, row_end, col_start, col_end| Region {
            row_start,
            row_end,
            col_start,
            col_end,
        };
        regions.push(rect(0, r, 0, c));
        regions.push(rect(0, r, c, w));
        regions.push(rect(r, h, 0, c));
        regions.push(rect(r, h, c, w));
        let top = h / 4;
        let left = w / 4;
        regions.push(rect(top, (top + r).min(h), left, (left + c).min(w)));
    }
    Ok(PyramidLayout {
        h,
        w,
        levels,
        regions,
    })
}

/// Descriptor sets of each region, cells in row-major order.
pub fn partition<'g>(grid: &'g DescriptorGrid, layout: &PyramidLayout) -> Result<Vec<Vec<&'g [f64]>>> {
    ensure!(
        layout.grid_shape() == (grid.h(), grid.w()),
        Validation,
        "layout built for {}x{} but grid is {}x{}",
        layout.h,
        layout.w,
        grid.h(),
        grid.w()
    );
    Ok(layout
        .regions
        .iter()
        .map(|region| {
            (region.row_start..region.row_end)
                .flat_map(|row| (region.col_start..region.col_end).map(move |col| (row, col)))
                .map(|(row, col)| grid.cell(row, col))
                .collect()
        })
        .collect())
}

/// Full single-scale DSP vector of length `2 m d K`, unit norm or zero.
///
/// The grid is normalized with `mode`, partitioned, each region is encoded as
/// an improved Fisher Vector, and the concatenation is l2-normalized. A region
/// whose descriptors are all zero contributes a zero block.
pub fn dsp_encode(
    grid: &DescriptorGrid,
    model: &GmmModel,
    layout: &PyramidLayout,
    mode: NormalizationMode,
) -> Result<Vec<f64>> {
    ensure!(
        grid.d() == model.dim(),
        Validation,
        "grid has d={} but the GMM expects d={}",
        grid.d(),
        model.dim()
    );
    let normalized = grid.normalize(mode)?;
    let block = 2 * model.dim() * model.components();
    let mut out = Vec::with_capacity(layout.len() * block);
    for set in partition(&normalized, layout)? {
        if set.iter().all(|x| x.iter().all(|&v| v == 0.0)) {
            out.extend(std::iter::repeat_n(0.0, block));
        } else {
            out.extend(improved_fv(model, &set)?.into_values());
        }
    }
    Ok(l2_normalize(&out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(row_start: usize, row_end: usize, col_start: usize, col_end: usize) -> Region {
        Region {
            row_start,
            row_end,
            col_start,
            col_end,
        }
    }

    #[test]
    fn even_grid_layout() {
        let l = build_layout(4, 4, 2).unwrap();
        assert_eq!(
            l.regions(),
            &[
                rect(0, 4, 0, 4),
                rect(0, 2, 0, 2),
                rect(0, 2, 2, 4),
                rect(2, 4, 0, 2),
                rect(2, 4, 2, 4),
                rect(1, 3, 1, 3),
            ]
        );
    }

    #[test]
    fn odd_grid_layout() {
        let l = build_layout(7, 7, 2).unwrap();
        let r = l.regions();
        assert_eq!((r[1].rows(), r[1].cols()), (4, 4));
        assert_eq!((r[2].rows(), r[2].cols()), (4, 3));
        assert_eq!((r[3].rows(), r[3].cols()), (3, 4));
        assert_eq!((r[4].rows(), r[4].cols()), (3, 3));
        assert_eq!(r[5], rect(1, 5, 1, 5));
    }

    #[test]
    fn single_level_and_size_limits() {
        assert_eq!(build_layout(3, 5, 1).unwrap().regions(), &[rect(0, 3, 0, 5)]);
        assert_eq!(build_layout(1, 1, 1).unwrap().len(), 1);
        assert!(build_layout(1, 5, 2).is_err());
        assert!(build_layout(4, 4, 3).is_err());
        assert!(build_layout(4, 4, 0).is_err());
        let l = build_layout(2, 2, 2).unwrap();
        assert!(l.regions().iter().all(|r| r.cells() >= 1));
    }

    #[test]
    fn partition_sizes_on_4x4() {
        let g = DescriptorGrid::new(4, 4, 1, (0..16).map(f64::from).collect()).unwrap();
        let sets = partition(&g, &build_layout(4, 4, 2).unwrap()).unwrap();
        let sizes: Vec<usize> = sets.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![16, 4, 4, 4, 4, 4]);
        assert_eq!(sets[5], vec![&[5.0][..], &[6.0], &[9.0], &[10.0]]);
    }

    #[test]
    fn partition_rejects_foreign_layout() {
        let g = DescriptorGrid::new(3, 3, 1, vec![0.0; 9]).unwrap();
        assert!(partition(&g, &build_layout(4, 4, 2).unwrap()).is_err());
    }

    #[test]
    fn zero_region_gives_zero_block() {
        let model = GmmModel::new(vec![1.0], vec![vec![0.5, 0.5]], vec![vec![1.0, 1.0]]).unwrap();
        // Only the bottom-right cell is active.
        let mut values = vec![0.0; 2 * 2 * 2];
        values[6] = 1.0;
        values[7] = 2.0;
        let g = DescriptorGrid::new(2, 2, 2, values).unwrap();
        let v = dsp_encode(&g, &model, &build_layout(2, 2, 2).unwrap(), NormalizationMode::None).unwrap();
        assert_eq!(v.len(), 6 * 4);
        for region in [1, 2, 3, 5] {
            assert!(v[region * 4..(region + 1) * 4].iter().all(|&x| x == 0.0));
        }
        assert!(v[16..20].iter().any(|&x| x != 0.0));
    }
}
