//! Detector regions, region-sum readout, dual one-hot label codecs and
//! class decisions.
//!
//! Two tasks share one set of detectors by giving them opposite polarity:
//! one task's class is the darkest region (`argmin`), the other's the
//! brightest (`argmax`). Four tasks additionally split every region into a
//! left and a right half, and each task owns one half and one polarity.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Axis-aligned detector rectangle in grid pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Region {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    fn overlaps(&self, other: &Region) -> bool {
        self.row0 < other.row0 + other.height
            && other.row0 < self.row0 + self.height
            && self.col0 < other.col0 + other.width
            && other.col0 < self.col0 + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

/// Ordered detector regions plus the number of vertical sub-cells per region.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DetectorLayout {
    pub regions: Vec<Region>,
    pub sub_split: usize,
}

impl DetectorLayout {
    pub fn new(regions: Vec<Region>, sub_split: usize) -> Result<Self> {
        let layout = Self { regions, sub_split };
        layout.validate()?;
        Ok(layout)
    }

    /// Ten square regions in two rows of five, centered with even gaps.
    /// The side is a tenth of the shorter grid edge (20 px on 200×200).
    pub fn centered(grid_rows: usize, grid_cols: usize, sub_split: usize) -> Result<Self> {
        let side = grid_rows.min(grid_cols) / 10;
        Self::centered_blocks(grid_rows, grid_cols, side, 2, 5, sub_split)
    }

    /// `block_rows × block_cols` square regions of `side` pixels, centered on
    /// the grid with uniform integer gaps.
    pub fn centered_blocks(
        grid_rows: usize,
        grid_cols: usize,
        side: usize,
        block_rows: usize,
        block_cols: usize,
        sub_split: usize,
    ) -> Result<Self> {
        if side == 0 || block_rows * side > grid_rows || block_cols * side > grid_cols {
            return Err(Error::InvalidLayout(format!(
                "{block_rows}x{block_cols} regions of {side}px do not fit a {grid_rows}x{grid_cols} grid"
            )));
        }
        let place = |extent: usize, blocks: usize| -> Vec<usize> {
            let gap = (extent - blocks * side) / (blocks + 1);
            let span = blocks * side + (blocks - 1) * gap;
            let start = (extent - span) / 2;
            (0..blocks).map(|i| start + i * (side + gap)).collect()
        };
        let rows = place(grid_rows, block_rows);
        let cols = place(grid_cols, block_cols);
        let regions = rows
            .iter()
            .flat_map(|&r| {
                cols.iter().map(move |&c| Region {
                    row0: r,
                    col0: c,
                    height: side,
                    width: side,
                })
            })
            .collect();
        let layout = Self::new(regions, sub_split)?;
        layout.validate_within(grid_rows, grid_cols)?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::InvalidLayout("no regions".into()));
        }
        if self.sub_split == 0 {
            return Err(Error::InvalidLayout("sub_split must be at least 1".into()));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if r.area() == 0 {
                return Err(Error::InvalidLayout(format!("region {i} is empty")));
            }
            if r.width % self.sub_split != 0 {
                return Err(Error::InvalidLayout(format!(
                    "region {i} width {} not divisible into {} cells",
                    r.width, self.sub_split
                )));
            }
            for (j, other) in self.regions.iter().enumerate().skip(i + 1) {
                if r.overlaps(other) {
                    return Err(Error::InvalidLayout(format!("regions {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    pub fn validate_within(&self, rows: usize, cols: usize) -> Result<()> {
        self.validate()?;
        for (i, r) in self.regions.iter().enumerate() {
            if r.row0 + r.height > rows || r.col0 + r.width > cols {
                return Err(Error::InvalidLayout(format!("region {i} exceeds the {rows}x{cols} grid")));
            }
        }
        Ok(())
    }

    /// Physical detectors (sub-cells of one region share a detector).
    pub fn detector_count(&self) -> usize {
        self.regions.len()
    }

    /// Readout cells: regions × sub-cells.
    pub fn cell_count(&self) -> usize {
        self.regions.len() * self.sub_split
    }

    /// Readout cells in region-major order, left to right within a region.
    pub fn cells(&self) -> impl Iterator<Item = Region> + '_ {
        let split = self.sub_split;
        self.regions.iter().flat_map(move |r| {
            let w = r.width / split;
            (0..split).map(move |k| Region {
                row0: r.row0,
                col0: r.col0 + k * w,
                height: r.height,
                width: w,
            })
        })
    }

    /// Row-major pixel-to-cell map (`usize::MAX` for pixels outside every cell).
    pub fn cell_map(&self, rows: usize, cols: usize) -> Vec<usize> {
        let mut map = vec![usize::MAX; rows * cols];
        for (k, cell) in self.cells().enumerate() {
            for r in cell.row0..cell.row0 + cell.height {
                map[r * cols + cell.col0..r * cols + cell.col0 + cell.width].fill(k);
            }
        }
        map
    }
}

/// Region-summed intensities, one value per readout cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorReading {
    pub values: Vec<f64>,
}

/// Sums the intensity image over every readout cell.
pub fn read(image: &[f64], rows: usize, cols: usize, layout: &DetectorLayout) -> Result<DetectorReading> {
    if image.len() != rows * cols {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            actual: image.len(),
        });
    }
    layout.validate_within(rows, cols)?;
    let values = layout
        .cells()
        .map(|cell| {
            (cell.row0..cell.row0 + cell.height)
                .map(|r| image[r * cols + cell.col0..r * cols + cell.col0 + cell.width].iter().sum::<f64>())
                .sum()
        })
        .collect();
    Ok(DetectorReading { values })
}

/// Whether a task's class is marked by the darkest or brightest cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Polarity {
    Argmin,
    Argmax,
}

/// How one task's classes map onto readout cells.
///
/// Class `c` lives in cell `offset + stride·c`; the target vector spans all
/// `cells` readout cells, filled with the background value (1 for argmin
/// tasks, 0 for argmax tasks) except at the class cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelCodec {
    pub task: usize,
    pub polarity: Polarity,
    pub offset: usize,
    pub stride: usize,
    pub classes: usize,
    pub cells: usize,
}

impl LabelCodec {
    /// Conventional single-task readout: argmax over `classes` regions.
    pub fn single_task(classes: usize) -> Self {
        Self {
            task: 0,
            polarity: Polarity::Argmax,
            offset: 0,
            stride: 1,
            classes,
            cells: classes,
        }
    }

    /// Codecs for `tasks` tasks sharing `classes` detector regions.
    ///
    /// * 1 task: argmax.
    /// * 2 tasks: task 0 reversed one-hot (argmin), task 1 one-hot (argmax).
    /// * 4 tasks: each region halved; tasks 0/1 are argmax on the left/right
    ///   halves, tasks 2/3 argmin on the right/left halves.
    pub fn for_tasks(tasks: usize, classes: usize) -> Result<Vec<Self>> {
        let codec = |task, polarity, offset, stride| Self {
            task,
            polarity,
            offset,
            stride,
            classes,
            cells: classes * stride,
        };
        match tasks {
            1 => Ok(vec![Self::single_task(classes)]),
            2 => Ok(vec![
                codec(0, Polarity::Argmin, 0, 1),
                codec(1, Polarity::Argmax, 0, 1),
            ]),
            4 => Ok(vec![
                codec(0, Polarity::Argmax, 0, 2),
                codec(1, Polarity::Argmax, 1, 2),
                codec(2, Polarity::Argmin, 1, 2),
                codec(3, Polarity::Argmin, 0, 2),
            ]),
            t => Err(Error::InvalidTopology(format!("no detector codec for {t} tasks"))),
        }
    }

    /// Sub-cells per region this codec family needs.
    pub fn sub_split_for(tasks: usize) -> usize {
        if tasks > 2 {
            2
        } else {
            1
        }
    }

    pub fn cell(&self, class: usize) -> usize {
        self.offset + self.stride * class
    }

    fn background(&self) -> f64 {
        match self.polarity {
            Polarity::Argmin => 1.0,
            Polarity::Argmax => 0.0,
        }
    }
}

/// Class decided by the codec's polarity over its own cells. Ties go to the
/// lowest class index.
pub fn decide(reading: &DetectorReading, codec: &LabelCodec) -> Result<usize> {
    decide_values(&reading.values, codec)
}

pub(crate) fn decide_values(values: &[f64], codec: &LabelCodec) -> Result<usize> {
    if values.len() != codec.cells {
        return Err(Error::LengthMismatch {
            expected: codec.cells,
            actual: values.len(),
        });
    }
    if codec.classes == 0 {
        return Err(Error::Empty("codec classes"));
    }
    let mut best = 0;
    let mut best_value = values[codec.cell(0)];
    for class in 1..codec.classes {
        let v = values[codec.cell(class)];
        let better = match codec.polarity {
            Polarity::Argmin => v < best_value,
            Polarity::Argmax => v > best_value,
        };
        if better {
            best = class;
            best_value = v;
        }
    }
    Ok(best)
}

/// Target vector over all readout cells for `class`.
pub fn encode_target(codec: &LabelCodec, class: usize) -> Result<Vec<f64>> {
    if class >= codec.classes {
        return Err(Error::ClassOutOfRange {
            class,
            classes: codec.classes,
        });
    }
    let background = codec.background();
    let mut target = vec![background; codec.cells];
    target[codec.cell(class)] = 1.0 - background;
    Ok(target)
}

/// Guesses which task produced a reading (an optional heuristic, not part of
/// the trained system's contract).
///
/// Each codec's margin is the gap between its winning cell and the runner-up
/// in the winning direction, normalized by the spread of that codec's cells;
/// the task with the most decisive margin wins.
pub fn infer_task(reading: &DetectorReading, codecs: &[LabelCodec]) -> Result<usize> {
    let mut best = None;
    for (i, codec) in codecs.iter().enumerate() {
        if reading.values.len() != codec.cells {
            return Err(Error::LengthMismatch {
                expected: codec.cells,
                actual: reading.values.len(),
            });
        }
        let mut v: Vec<f64> = (0..codec.classes).map(|c| reading.values[codec.cell(c)]).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        if n < 2 {
            continue;
        }
        let spread = v[n - 1] - v[0];
        if spread <= 0.0 {
            continue;
        }
        let margin = match codec.polarity {
            Polarity::Argmin => v[1] - v[0],
            Polarity::Argmax => v[n - 1] - v[n - 2],
        } / spread;
        if best.is_none_or(|(_, m)| margin > m) {
            best = Some((i, margin));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Empty("no codec with a usable margin"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_reading(n: usize, v: f64) -> DetectorReading {
        DetectorReading { values: vec![v; n] }
    }

    #[test]
    fn default_layout_on_200_grid() {
        let layout = DetectorLayout::centered(200, 200, 1).unwrap();
        assert_eq!(layout.regions.len(), 10);
        assert!(layout.regions.iter().all(|r| r.height == 20 && r.width == 20));
        let split = DetectorLayout::centered(200, 200, 2).unwrap();
        assert_eq!(split.cell_count(), 20);
        assert!(split.cells().all(|c| c.height == 20 && c.width == 10));
    }

    #[test]
    fn uniform_image_reads_area() {
        let layout = DetectorLayout::centered(200, 200, 1).unwrap();
        let image = vec![1.0; 200 * 200];
        let reading = read(&image, 200, 200, &layout).unwrap();
        assert!(reading.values.iter().all(|&v| v == 400.0));
        let zero = read(&vec![0.0; 200 * 200], 200, 200, &layout).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sub_cells_partition_regions() {
        let whole = DetectorLayout::centered(100, 100, 1).unwrap();
        let halves = DetectorLayout::centered(100, 100, 2).unwrap();
        let image: Vec<f64> = (0..100 * 100).map(|i| ((i * 7919) % 101) as f64).collect();
        let a = read(&image, 100, 100, &whole).unwrap();
        let b = read(&image, 100, 100, &halves).unwrap();
        for (i, v) in a.values.iter().enumerate() {
            // integer-valued sums are exact in f64
            assert_eq!(*v, b.values[2 * i] + b.values[2 * i + 1]);
        }
    }

    #[test]
    fn layout_validation() {
        let r = Region { row0: 0, col0: 0, height: 4, width: 4 };
        let overlapping = Region { row0: 2, col0: 2, height: 4, width: 4 };
        assert!(DetectorLayout::new(vec![r, overlapping], 1).is_err());
        assert!(DetectorLayout::new(vec![r], 3).is_err());
        let far = Region { row0: 10, col0: 10, height: 4, width: 4 };
        let layout = DetectorLayout::new(vec![r, far], 1).unwrap();
        assert!(layout.validate_within(12, 12).is_err());
        assert!(read(&[0.0; 144], 12, 12, &layout).is_err());
        assert!(DetectorLayout::centered(8, 8, 1).is_err());
    }

    #[test]
    fn two_task_decisions() {
        let codecs = LabelCodec::for_tasks(2, 10).unwrap();
        let mut values = vec![5.0; 10];
        values[6] = 1.0;
        values[7] = 9.0;
        let reading = DetectorReading { values };
        assert_eq!(decide(&reading, &codecs[0]).unwrap(), 6);
        assert_eq!(decide(&reading, &codecs[1]).unwrap(), 7);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let codecs = LabelCodec::for_tasks(2, 10).unwrap();
        let reading = uniform_reading(10, 3.0);
        assert_eq!(decide(&reading, &codecs[0]).unwrap(), 0);
        assert_eq!(decide(&reading, &codecs[1]).unwrap(), 0);
    }

    #[test]
    fn decide_checks_length() {
        let codecs = LabelCodec::for_tasks(4, 10).unwrap();
        assert!(decide(&uniform_reading(10, 1.0), &codecs[0]).is_err());
    }

    #[test]
    fn two_task_targets() {
        let codecs = LabelCodec::for_tasks(2, 10).unwrap();
        assert_eq!(encode_target(&codecs[0], 9).unwrap(), [1., 1., 1., 1., 1., 1., 1., 1., 1., 0.]);
        assert_eq!(encode_target(&codecs[1], 9).unwrap(), [0., 0., 0., 0., 0., 0., 0., 0., 0., 1.]);
        assert!(encode_target(&codecs[0], 10).is_err());
    }

    #[test]
    fn four_task_targets_for_class_nine() {
        let codecs = LabelCodec::for_tasks(4, 10).unwrap();
        let mut expected = [[0.0; 20]; 4];
        expected[0][18] = 1.0;
        expected[1][19] = 1.0;
        expected[2] = [1.0; 20];
        expected[2][19] = 0.0;
        expected[3] = [1.0; 20];
        expected[3][18] = 0.0;
        for (codec, want) in codecs.iter().zip(expected) {
            assert_eq!(encode_target(codec, 9).unwrap(), want);
        }
    }

    #[test]
    fn codecs_are_distinguishable() {
        let codecs = LabelCodec::for_tasks(4, 10).unwrap();
        for (i, a) in codecs.iter().enumerate() {
            for b in &codecs[i + 1..] {
                assert!(a.polarity != b.polarity || a.offset != b.offset);
            }
        }
    }

    #[test]
    fn ideal_readings_round_trip() {
        for tasks in [1, 2, 4] {
            for codec in LabelCodec::for_tasks(tasks, 10).unwrap() {
                for class in 0..10 {
                    let reading = DetectorReading {
                        values: encode_target(&codec, class).unwrap(),
                    };
                    assert_eq!(decide(&reading, &codec).unwrap(), class);
                }
            }
        }
    }

    #[test]
    fn unsupported_task_count() {
        assert!(LabelCodec::for_tasks(3, 10).is_err());
    }

    #[test]
    fn heuristic_task_inference() {
        let codecs = LabelCodec::for_tasks(2, 10).unwrap();
        // one deep minimum: looks like the argmin task
        let mut values = vec![10.0; 10];
        values[3] = 1.0;
        let dark = DetectorReading { values };
        assert_eq!(infer_task(&dark, &codecs).unwrap(), 0);
        let mut values = vec![1.0; 10];
        values[3] = 10.0;
        let bright = DetectorReading { values };
        assert_eq!(infer_task(&bright, &codecs).unwrap(), 1);
    }

    proptest! {
        #[test]
        fn decisions_survive_monotone_transforms(
            values in proptest::collection::vec(0.0f64..100.0, 10),
            offset in 0.0f64..50.0,
            scale in 0.01f64..20.0,
        ) {
            let codecs = LabelCodec::for_tasks(2, 10).unwrap();
            let base = DetectorReading { values: values.clone() };
            let moved = DetectorReading { values: values.iter().map(|v| v * scale + offset).collect() };
            for codec in &codecs {
                prop_assert_eq!(decide(&base, codec).unwrap(), decide(&moved, codec).unwrap());
            }
        }
    }
}
