//! Sketch ingestion and the per-resolution instance mask pyramid.

pub mod pnm;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prompt::{InstanceId, KeywordIndices};
use crate::Warning;
use pnm::Pnm;

/// Label-map sketch: each cell holds an instance id, 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchLabelMap {
    pub height: usize,
    pub width: usize,
    pub instances: InstanceId,
    cells: Vec<u8>,
}

impl SketchLabelMap {
    pub fn new(height: usize, width: usize, cells: Vec<u8>, instances: InstanceId) -> Result<Self> {
        if height == 0 || width == 0 || cells.len() != height * width {
            return Err(Error::Parse(format!(
                "label map of {height}x{width} needs {} cells, got {}",
                height * width,
                cells.len()
            )));
        }
        if let Some(pos) = cells.iter().position(|&c| c > instances) {
            return Err(Error::LabelOutOfRange {
                value: cells[pos],
                row: pos / width,
                col: pos % width,
                max: instances,
            });
        }
        Ok(Self { height, width, instances, cells })
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }
}

/// Binary mask at some resolution, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub height: usize,
    pub width: usize,
    cells: Vec<u8>,
}

impl InstanceMask {
    pub fn new(height: usize, width: usize, cells: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::BadTarget { target_h: height, target_w: width, source_h: height, source_w: width });
        }
        if cells.len() != height * width {
            return Err(Error::MaskLengthMismatch { expected: height * width, got: cells.len() });
        }
        Ok(Self { height, width, cells: cells.into_iter().map(|c| u8::from(c != 0)).collect() })
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn area(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }
}

pub fn load_label_map(path: &Path, expected_instances: InstanceId) -> Result<SketchLabelMap> {
    match pnm::read_pnm(path)? {
        Pnm::Gray { width, height, pixels } => {
            SketchLabelMap::new(height, width, pixels, expected_instances)
        }
        Pnm::Rgb { .. } => Err(Error::Parse(format!(
            "{}: color sketch needs a color table",
            path.display()
        ))),
    }
}

/// Convert a P6 color sketch into a label map. Colors absent from the table are background.
pub fn load_color_sketch(
    path: &Path,
    colors: &[([u8; 3], InstanceId)],
    expected_instances: InstanceId,
) -> Result<SketchLabelMap> {
    match pnm::read_pnm(path)? {
        Pnm::Rgb { width, height, pixels } => {
            let cells = pixels
                .iter()
                .map(|px| colors.iter().find(|(c, _)| c == px).map_or(0, |(_, id)| *id))
                .collect();
            SketchLabelMap::new(height, width, cells, expected_instances)
        }
        Pnm::Gray { width, height, pixels } => {
            SketchLabelMap::new(height, width, pixels, expected_instances)
        }
    }
}

/// Standalone per-instance sketch: any nonzero pixel belongs to the instance.
pub fn load_instance_mask(path: &Path) -> Result<InstanceMask> {
    match pnm::read_pnm(path)? {
        Pnm::Gray { width, height, pixels } => InstanceMask::new(height, width, pixels),
        Pnm::Rgb { width, height, pixels } => {
            InstanceMask::new(height, width, pixels.iter().map(|p| u8::from(*p != [0; 3])).collect())
        }
    }
}

pub fn instance_mask(map: &SketchLabelMap, id: InstanceId) -> Result<InstanceMask> {
    if id == 0 || id > map.instances {
        return Err(Error::UnknownInstance(id));
    }
    let cells = map.cells.iter().map(|&c| u8::from(c == id)).collect();
    InstanceMask::new(map.height, map.width, cells)
}

/// Source index range covered by target cell `t` when `src` cells tile `dst` cells.
fn window(t: usize, src: usize, dst: usize) -> std::ops::Range<usize> {
    (t * src / dst)..((t + 1) * src / dst)
}

/// Any-coverage pooling: a target cell is set iff any source pixel in its window is set.
/// Windows partition the source along each axis by proportional integer ranges.
pub fn downsample_any(mask: &InstanceMask, target: (usize, usize)) -> Result<InstanceMask> {
    let (th, tw) = target;
    if th == 0 || tw == 0 || th > mask.height || tw > mask.width {
        return Err(Error::BadTarget {
            target_h: th,
            target_w: tw,
            source_h: mask.height,
            source_w: mask.width,
        });
    }
    let mut cells = vec![0u8; th * tw];
    for r in 0..th {
        let rows = window(r, mask.height, th);
        for c in 0..tw {
            let cols = window(c, mask.width, tw);
            let hit = rows.clone().any(|sr| cols.clone().any(|sc| mask.get(sr, sc) != 0));
            cells[r * tw + c] = u8::from(hit);
        }
    }
    InstanceMask::new(th, tw, cells)
}

/// Flattened instance masks at one attention resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskLevel {
    pub height: usize,
    pub width: usize,
    masks: BTreeMap<InstanceId, Vec<u8>>,
}

impl MaskLevel {
    pub fn new(height: usize, width: usize, masks: BTreeMap<InstanceId, Vec<u8>>) -> Result<Self> {
        for m in masks.values() {
            if m.len() != height * width {
                return Err(Error::MaskLengthMismatch { expected: height * width, got: m.len() });
            }
        }
        Ok(Self { height, width, masks })
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mask(&self, id: InstanceId) -> Option<&[u8]> {
        self.masks.get(&id).map(Vec::as_slice)
    }

    pub fn instances(&self) -> impl Iterator<Item = (InstanceId, &[u8])> {
        self.masks.iter().map(|(id, m)| (*id, m.as_slice()))
    }

    pub fn area_ratio(&self, id: InstanceId) -> Option<f64> {
        self.mask(id)
            .map(|m| m.iter().map(|&c| c as f64).sum::<f64>() / self.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskPyramid {
    pub levels: Vec<MaskLevel>,
    #[serde(skip)]
    pub warnings: Vec<Warning>,
}

impl MaskPyramid {
    pub fn level(&self, height: usize, width: usize) -> Result<&MaskLevel> {
        self.levels
            .iter()
            .find(|l| l.height == height && l.width == width)
            .ok_or(Error::MissingLevel(height, width))
    }
}

/// Pyramid from one label map, one mask per bound instance.
pub fn build_pyramid(
    map: &SketchLabelMap,
    binding: &KeywordIndices,
    resolutions: &[(usize, usize)],
    allow_empty: bool,
) -> Result<MaskPyramid> {
    let masks = binding
        .iter()
        .map(|kw| Ok((kw.instance, instance_mask(map, kw.instance)?)))
        .collect::<Result<Vec<_>>>()?;
    build_pyramid_from_masks(&masks, binding, resolutions, allow_empty)
}

/// Pyramid from independent (possibly overlapping) per-instance masks.
pub fn build_pyramid_from_masks(
    masks: &[(InstanceId, InstanceMask)],
    binding: &KeywordIndices,
    resolutions: &[(usize, usize)],
    allow_empty: bool,
) -> Result<MaskPyramid> {
    if resolutions.is_empty() {
        return Err(Error::BadTarget { target_h: 0, target_w: 0, source_h: 0, source_w: 0 });
    }
    let mut warnings = Vec::new();
    let mut sources = Vec::new();
    for kw in binding.iter() {
        let (_, mask) = masks
            .iter()
            .find(|(id, _)| *id == kw.instance)
            .ok_or(Error::UnknownInstance(kw.instance))?;
        if mask.area() == 0 {
            if !allow_empty {
                return Err(Error::EmptyInstance(kw.instance));
            }
            warnings.push(Warning::EmptyInstance(kw.instance));
        }
        sources.push((kw.instance, mask));
    }
    let levels = resolutions
        .iter()
        .map(|&(h, w)| {
            let masks = sources
                .iter()
                .map(|(id, m)| Ok((*id, downsample_any(m, (h, w))?.cells)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            MaskLevel::new(h, w, masks)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskPyramid { levels, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{extract_keywords, tokenize, Lexicon};
    use proptest::prelude::*;

    fn mask(h: usize, w: usize, on: &[(usize, usize)]) -> InstanceMask {
        let mut cells = vec![0; h * w];
        for &(r, c) in on {
            cells[r * w + c] = 1;
        }
        InstanceMask::new(h, w, cells).unwrap()
    }

    fn river_binding() -> KeywordIndices {
        let t = tokenize("a river", 8).unwrap();
        extract_keywords(&t, &Lexicon::new(["river"]), None).unwrap().keywords
    }

    #[test]
    fn label_map_range_check() {
        let err = SketchLabelMap::new(2, 2, vec![0, 1, 7, 0], 5).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { value: 7, row: 1, col: 0, max: 5 }));
    }

    #[test]
    fn load_p5_and_p2_identically() {
        let dir = tempfile::tempdir().unwrap();
        let px: Vec<u8> = (0..16).map(|i| u8::from(i % 3 == 0)).collect();
        let p5 = dir.path().join("a.pgm");
        let p2 = dir.path().join("b.pgm");
        std::fs::write(&p5, pnm::encode_pgm(4, 4, &px)).unwrap();
        std::fs::write(&p2, pnm::encode_pgm_ascii(4, 4, &px)).unwrap();
        let a = load_label_map(&p5, 1).unwrap();
        assert_eq!((a.height, a.width), (4, 4));
        assert_eq!(a, load_label_map(&p2, 1).unwrap());
        let bad: Vec<u8> = vec![7; 16];
        std::fs::write(&p5, pnm::encode_pgm(4, 4, &bad)).unwrap();
        assert!(matches!(load_label_map(&p5, 5), Err(Error::LabelOutOfRange { .. })));
        assert!(matches!(load_label_map(&dir.path().join("missing.pgm"), 1), Err(Error::Io { .. })));
    }

    #[test]
    fn color_sketch_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let px = vec![[255, 0, 0], [0, 0, 255], [9, 9, 9], [255, 0, 0]];
        std::fs::write(&path, pnm::encode_ppm(2, 2, &px)).unwrap();
        let map = load_color_sketch(&path, &[([255, 0, 0], 1), ([0, 0, 255], 2)], 2).unwrap();
        assert_eq!(map.cells(), &[1, 2, 0, 1]);
        assert!(load_label_map(&path, 2).is_err());
    }

    #[test]
    fn instance_mask_cases() {
        let zeros = SketchLabelMap::new(2, 2, vec![0; 4], 1).unwrap();
        assert_eq!(instance_mask(&zeros, 1).unwrap().area(), 0);
        let full = SketchLabelMap::new(2, 2, vec![2; 4], 2).unwrap();
        assert_eq!(instance_mask(&full, 2).unwrap().area(), 4);
        assert!(matches!(instance_mask(&full, 3), Err(Error::UnknownInstance(3))));
        assert!(matches!(instance_mask(&full, 0), Err(Error::UnknownInstance(0))));
    }

    #[test]
    fn partition_of_grid() {
        let map = SketchLabelMap::new(2, 3, vec![0, 1, 2, 3, 1, 0], 3).unwrap();
        let mut total = vec![0u8; 6];
        for id in 1..=3 {
            for (t, c) in total.iter_mut().zip(instance_mask(&map, id).unwrap().cells()) {
                *t += c;
            }
        }
        for (t, &label) in total.iter().zip(map.cells()) {
            assert_eq!(*t, u8::from(label != 0));
        }
    }

    #[test]
    fn three_to_two_windows() {
        // rows/cols tile as {0} -> 0 and {1, 2} -> 1
        let expected_cell = [0, 1, 1];
        for r in 0..3 {
            for c in 0..3 {
                let out = downsample_any(&mask(3, 3, &[(r, c)]), (2, 2)).unwrap();
                let mut want = vec![0; 4];
                want[expected_cell[r] * 2 + expected_cell[c]] = 1;
                assert_eq!(out.cells(), want.as_slice(), "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn downsample_bad_targets() {
        let m = mask(4, 4, &[]);
        assert!(matches!(downsample_any(&m, (0, 2)), Err(Error::BadTarget { .. })));
        assert!(matches!(downsample_any(&m, (5, 2)), Err(Error::BadTarget { .. })));
    }

    #[test]
    fn left_half_pyramid() {
        let cells: Vec<u8> = (0..16).map(|i| u8::from(i % 4 < 2)).collect();
        let map = SketchLabelMap::new(4, 4, cells, 1).unwrap();
        let binding = river_binding();
        let p = build_pyramid(&map, &binding, &[(4, 4), (2, 2), (2, 2)], false).unwrap();
        assert_eq!(p.level(2, 2).unwrap().mask(1).unwrap(), &[1, 0, 1, 0]);
        assert_eq!(p.levels[1], p.levels[2]);
        assert_eq!(p.level(4, 4).unwrap().area_ratio(1), Some(0.5));
        assert!(matches!(p.level(3, 3), Err(Error::MissingLevel(3, 3))));
    }

    #[test]
    fn empty_instance_policy() {
        let map = SketchLabelMap::new(4, 4, vec![0; 16], 1).unwrap();
        let binding = river_binding();
        assert!(matches!(
            build_pyramid(&map, &binding, &[(2, 2)], false),
            Err(Error::EmptyInstance(1))
        ));
        let p = build_pyramid(&map, &binding, &[(4, 4), (2, 2)], true).unwrap();
        assert_eq!(p.warnings, vec![Warning::EmptyInstance(1)]);
        assert!(p.levels.iter().all(|l| l.mask(1).unwrap().iter().all(|&c| c == 0)));
    }

    fn arb_mask() -> impl Strategy<Value = InstanceMask> {
        (1usize..20, 1usize..20).prop_flat_map(|(h, w)| {
            proptest::collection::vec(prop_oneof![9 => Just(0u8), 1 => Just(1u8)], h * w)
                .prop_map(move |cells| InstanceMask::new(h, w, cells).unwrap())
        })
    }

    proptest! {
        #[test]
        fn coverage_preserved(m in arb_mask(), fh in 0.0f64..1.0, fw in 0.0f64..1.0) {
            let th = 1 + (fh * (m.height - 1) as f64) as usize;
            let tw = 1 + (fw * (m.width - 1) as f64) as usize;
            let d = downsample_any(&m, (th, tw)).unwrap();
            prop_assert_eq!(d.area() > 0, m.area() > 0);
            prop_assert!(d.area() <= m.area());
        }

        #[test]
        fn single_pixel_maps_to_one_cell(h in 1usize..24, w in 1usize..24, seed in any::<u64>()) {
            let r = (seed as usize) % h;
            let c = (seed as usize / 31) % w;
            let th = 1 + (seed as usize / 7) % h;
            let tw = 1 + (seed as usize / 13) % w;
            prop_assert_eq!(downsample_any(&mask(h, w, &[(r, c)]), (th, tw)).unwrap().area(), 1);
        }

        #[test]
        fn monotone_nesting(m in arb_mask(), drop in any::<u64>()) {
            let sub_cells: Vec<u8> = m.cells().iter().enumerate()
                .map(|(i, &c)| if (drop >> (i % 64)) & 1 == 1 { 0 } else { c }).collect();
            let sub = InstanceMask::new(m.height, m.width, sub_cells).unwrap();
            let target = (1 + m.height / 2, 1 + m.width / 3);
            let big = downsample_any(&m, target).unwrap();
            let small = downsample_any(&sub, target).unwrap();
            prop_assert!(small.cells().iter().zip(big.cells()).all(|(s, b)| s <= b));
        }

        #[test]
        fn row_major_roundtrip(m in arb_mask()) {
            let flat = m.cells().to_vec();
            let grid: Vec<Vec<u8>> = flat.chunks(m.width).map(<[u8]>::to_vec).collect();
            prop_assert_eq!(grid.len(), m.height);
            for (r, row) in grid.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    prop_assert_eq!(v, m.get(r, c));
                }
            }
            prop_assert_eq!(grid.concat(), flat);
        }

        #[test]
        fn label_partition_sums(cells in proptest::collection::vec(0u8..4, 36)) {
            let map = SketchLabelMap::new(6, 6, cells, 3).unwrap();
            for target in [(6usize, 6usize), (3, 3), (2, 4), (1, 1)] {
                let mut sum = vec![0u8; target.0 * target.1];
                for id in 1..=3 {
                    let d = downsample_any(&instance_mask(&map, id).unwrap(), target).unwrap();
                    for (s, c) in sum.iter_mut().zip(d.cells()) { *s += c; }
                }
                let bound = if target == (6, 6) { 1 } else { 3 };
                prop_assert!(sum.iter().all(|&s| s <= bound));
            }
        }
    }
}
