//! RGBT sequences on disk and in memory, and tracker result files.
//!
//! Two directory layouts are understood:
//!
//! ```text
//! gtot:     v/  i/  groundTruth_v.txt  groundTruth_i.txt
//! rgbt234:  visible/  infrared/  visible.txt  infrared.txt
//! ```
//!
//! Each sequence directory may carry an `attributes.txt` listing its tags.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{DapError, Result};
use crate::evaluation::Attribute;
use crate::geometry::BBox;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Gtot,
    Rgbt234,
}

impl Layout {
    fn dirs(self) -> (&'static str, &'static str) {
        match self {
            Layout::Gtot => ("v", "i"),
            Layout::Rgbt234 => ("visible", "infrared"),
        }
    }

    fn gt_files(self) -> (&'static str, &'static str) {
        match self {
            Layout::Gtot => ("groundTruth_v.txt", "groundTruth_i.txt"),
            Layout::Rgbt234 => ("visible.txt", "infrared.txt"),
        }
    }

    /// Guesses the layout from the subdirectories present.
    pub fn detect(dir: &Path) -> Option<Layout> {
        [Layout::Gtot, Layout::Rgbt234].into_iter().find(|l| {
            let (v, i) = l.dirs();
            dir.join(v).is_dir() && dir.join(i).is_dir()
        })
    }
}

impl std::str::FromStr for Layout {
    type Err = DapError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gtot" => Ok(Layout::Gtot),
            "rgbt234" => Ok(Layout::Rgbt234),
            other => Err(DapError::Config(format!("unknown layout {other:?}"))),
        }
    }
}

/// A frame either already decoded or still on disk.
#[derive(Debug, Clone)]
pub enum Frame {
    Memory(Arc<Image>),
    File(PathBuf),
}

impl Frame {
    pub fn load(&self) -> Result<Arc<Image>> {
        match self {
            Frame::Memory(img) => Ok(img.clone()),
            Frame::File(path) => Ok(Arc::new(Image::load(path)?)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RGBTSequence {
    pub name: String,
    rgb: Vec<Frame>,
    thermal: Vec<Frame>,
    /// Ground truth of the RGB modality; used for training and evaluation.
    pub gt: Vec<BBox>,
    /// Thermal ground truth when the dataset provides a separate one.
    pub gt_thermal: Option<Vec<BBox>>,
    pub attributes: BTreeSet<Attribute>,
}

impl RGBTSequence {
    pub fn new(name: &str, rgb: Vec<Frame>, thermal: Vec<Frame>, gt: Vec<BBox>) -> Result<Self> {
        if rgb.len() != thermal.len() {
            return Err(DapError::CountMismatch {
                what: "rgb/thermal frames".into(),
                left: rgb.len(),
                right: thermal.len(),
            });
        }
        if gt.len() != rgb.len() {
            return Err(DapError::CountMismatch {
                what: "ground truth/frames".into(),
                left: gt.len(),
                right: rgb.len(),
            });
        }
        Ok(RGBTSequence {
            name: name.to_string(),
            rgb,
            thermal,
            gt,
            gt_thermal: None,
            attributes: BTreeSet::new(),
        })
    }

    pub fn from_images(name: &str, rgb: Vec<Image>, thermal: Vec<Image>, gt: Vec<BBox>) -> Result<Self> {
        let wrap = |v: Vec<Image>| v.into_iter().map(|i| Frame::Memory(Arc::new(i))).collect();
        Self::new(name, wrap(rgb), wrap(thermal), gt)
    }

    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }

    pub fn rgb(&self, i: usize) -> Result<Arc<Image>> {
        self.rgb[i].load()
    }

    pub fn thermal(&self, i: usize) -> Result<Arc<Image>> {
        self.thermal[i].load()
    }

    /// Decodes every frame now so later accesses are free.
    pub fn preload(&mut self) -> Result<()> {
        for f in self.rgb.iter_mut().chain(self.thermal.iter_mut()) {
            if let Frame::File(_) = f {
                *f = Frame::Memory(f.load()?);
            }
        }
        Ok(())
    }

    /// Writes the sequence in `layout` under `dir` (frames as PNG).
    pub fn save(&self, dir: &Path, layout: Layout) -> Result<()> {
        let (vd, id) = layout.dirs();
        let (vg, ig) = layout.gt_files();
        for sub in [vd, id] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| DapError::io(dir.join(sub), e))?;
        }
        for i in 0..self.len() {
            let file = format!("{:05}.png", i + 1);
            self.rgb(i)?.save_png(&dir.join(vd).join(&file))?;
            self.thermal(i)?.save_png(&dir.join(id).join(&file))?;
        }
        save_results(&dir.join(vg), &self.gt)?;
        save_results(&dir.join(ig), self.gt_thermal.as_ref().unwrap_or(&self.gt))?;
        if !self.attributes.is_empty() {
            let tags: Vec<&str> = self.attributes.iter().map(|a| a.tag()).collect();
            let path = dir.join("attributes.txt");
            fs::write(&path, tags.join("\n") + "\n").map_err(|e| DapError::io(path, e))?;
        }
        Ok(())
    }
}

/// Compares file names so that embedded numbers sort numerically
/// (`2.png` before `10.png`).
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut x, mut y) = (a.as_bytes(), b.as_bytes());
    loop {
        match (x.first(), y.first()) {
            (None, None) => return a.cmp(b),
            (None, _) => return Ordering::Less,
            (_, None) => return Ordering::Greater,
            (Some(c), Some(d)) if c.is_ascii_digit() && d.is_ascii_digit() => {
                let nx = x.iter().take_while(|c| c.is_ascii_digit()).count();
                let ny = y.iter().take_while(|c| c.is_ascii_digit()).count();
                let (dx, dy) = (trim_zeros(&x[..nx]), trim_zeros(&y[..ny]));
                let ord = dx.len().cmp(&dy.len()).then_with(|| dx.cmp(dy));
                if ord != Ordering::Equal {
                    return ord;
                }
                x = &x[nx..];
                y = &y[ny..];
            }
            (Some(c), Some(d)) => {
                if c != d {
                    return c.cmp(d);
                }
                x = &x[1..];
                y = &y[1..];
            }
        }
    }
}

fn trim_zeros(d: &[u8]) -> &[u8] {
    let z = d.iter().take_while(|&&c| c == b'0').count();
    &d[z..]
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "tif"];

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| DapError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| DapError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        if ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| {
        let name = |p: &PathBuf| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        natural_cmp(&name(a), &name(b))
    });
    Ok(files)
}

/// Parses one ground-truth or result line: 4 numbers (x, y, w, h) or 8
/// numbers (polygon corners, reduced to their bounding rectangle),
/// separated by commas and/or whitespace.
pub fn parse_box_line(line: &str) -> std::result::Result<BBox, String> {
    let nums: Vec<f64> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let (x, y, w, h) = match nums.len() {
        4 => (nums[0], nums[1], nums[2], nums[3]),
        8 => {
            let xs = [nums[0], nums[2], nums[4], nums[6]];
            let ys = [nums[1], nums[3], nums[5], nums[7]];
            let (x0, x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            let (y0, y1) = (ys.iter().copied().fold(f64::INFINITY, f64::min), ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            (x0, y0, x1 - x0, y1 - y0)
        }
        n => return Err(format!("expected 4 or 8 numbers, found {n}")),
    };
    BBox::new(x, y, w, h).map_err(|e| e.to_string())
}

/// Reads a box-per-line file; blank lines are skipped.
pub fn load_results(path: &Path) -> Result<Vec<BBox>> {
    let text = fs::read_to_string(path).map_err(|e| DapError::io(path, e))?;
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        boxes.push(parse_box_line(line).map_err(|m| DapError::parse(path, i + 1, m))?);
    }
    Ok(boxes)
}

/// Writes one `x,y,w,h` line per box with round-trip exact numbers.
pub fn save_results(path: &Path, boxes: &[BBox]) -> Result<()> {
    let mut s = String::new();
    for b in boxes {
        writeln!(s, "{},{},{},{}", b.x, b.y, b.w, b.h).expect("string write");
    }
    fs::write(path, s).map_err(|e| DapError::io(path, e))
}

fn load_attributes(path: &Path) -> Result<BTreeSet<Attribute>> {
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    let text = fs::read_to_string(path).map_err(|e| DapError::io(path, e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

/// Loads a sequence directory. Frames are decoded on first use.
pub fn load_sequence(dir: &Path, layout: Layout) -> Result<RGBTSequence> {
    let (vd, id) = layout.dirs();
    let (vg, ig) = layout.gt_files();
    let rgb = list_frames(&dir.join(vd))?;
    let thermal = list_frames(&dir.join(id))?;
    let gt_path = dir.join(vg);
    let gt = load_results(&gt_path)?;
    let gt_t_path = dir.join(ig);
    let gt_thermal = if gt_t_path.exists() {
        let g = load_results(&gt_t_path)?;
        if g.len() != gt.len() {
            return Err(DapError::CountMismatch {
                what: format!("{} lines", gt_t_path.display()),
                left: g.len(),
                right: gt.len(),
            });
        }
        Some(g)
    } else {
        None
    };
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    let mut seq = RGBTSequence::new(
        &name,
        rgb.into_iter().map(Frame::File).collect(),
        thermal.into_iter().map(Frame::File).collect(),
        gt,
    )?;
    seq.gt_thermal = gt_thermal;
    seq.attributes = load_attributes(&dir.join("attributes.txt"))?;
    Ok(seq)
}

/// Sequence directories directly below `root` (natural order), or `root`
/// itself when it is a sequence directory.
pub fn sequence_dirs(root: &Path) -> Result<Vec<(PathBuf, Layout)>> {
    if let Some(l) = Layout::detect(root) {
        return Ok(vec![(root.to_path_buf(), l)]);
    }
    let entries = fs::read_dir(root).map_err(|e| DapError::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| DapError::io(root, e))?.path();
        if let Some(l) = Layout::detect(&path) {
            dirs.push((path, l));
        }
    }
    dirs.sort_by(|a, b| natural_cmp(&a.0.to_string_lossy(), &b.0.to_string_lossy()));
    Ok(dirs)
}

pub fn load_dataset(root: &Path) -> Result<Vec<RGBTSequence>> {
    sequence_dirs(root)?
        .into_iter()
        .map(|(dir, layout)| load_sequence(&dir, layout))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_order() {
        let mut v = vec!["img10.png", "img2.png", "img1.png", "img02b.png", "a.png"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, ["a.png", "img1.png", "img2.png", "img02b.png", "img10.png"]);
    }

    #[test]
    fn separators_parse_identically() {
        assert_eq!(parse_box_line("10, 20, 30, 40"), parse_box_line("10 20 30 40"));
        assert_eq!(parse_box_line("10\t20,30 40").unwrap(), BBox::new(10.0, 20.0, 30.0, 40.0).unwrap());
    }

    #[test]
    fn polygon_lines_become_rectangles() {
        let b = parse_box_line("10,20,40,20,40,60,10,60").unwrap();
        assert_eq!(b, BBox::new(10.0, 20.0, 30.0, 40.0).unwrap());
    }

    #[test]
    fn malformed_lines() {
        assert!(parse_box_line("1,2,3").is_err());
        assert!(parse_box_line("1,2,a,4").is_err());
        assert!(parse_box_line("1,2,0,4").is_err());
    }
}
