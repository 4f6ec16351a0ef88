//! Precision and success curves, attribute tables and CSV export.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{DapError, Result};
use crate::geometry::{center_distance, iou, BBox};

/// Sequence-level challenge attributes of RGBT benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribute {
    /// No occlusion.
    NO,
    /// Partial occlusion.
    PO,
    /// Heavy occlusion.
    HO,
    /// Low illumination.
    LI,
    /// Low resolution.
    LR,
    /// Thermal crossover.
    TC,
    /// Deformation.
    DEF,
    /// Fast motion.
    FM,
    /// Scale variation.
    SV,
    /// Motion blur.
    MB,
    /// Camera moving.
    CM,
    /// Background clutter.
    BC,
}

impl Attribute {
    pub const ALL: [Attribute; 12] = [
        Attribute::NO,
        Attribute::PO,
        Attribute::HO,
        Attribute::LI,
        Attribute::LR,
        Attribute::TC,
        Attribute::DEF,
        Attribute::FM,
        Attribute::SV,
        Attribute::MB,
        Attribute::CM,
        Attribute::BC,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Attribute::NO => "NO",
            Attribute::PO => "PO",
            Attribute::HO => "HO",
            Attribute::LI => "LI",
            Attribute::LR => "LR",
            Attribute::TC => "TC",
            Attribute::DEF => "DEF",
            Attribute::FM => "FM",
            Attribute::SV => "SV",
            Attribute::MB => "MB",
            Attribute::CM => "CM",
            Attribute::BC => "BC",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Attribute {
    type Err = DapError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Attribute::ALL
            .into_iter()
            .find(|a| a.tag().eq_ignore_ascii_case(t))
            .ok_or_else(|| DapError::UnknownAttribute(t.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Representative precision threshold in pixels.
    pub pr_threshold: f64,
    /// Pixel thresholds of the precision curve.
    pub pr_thresholds: Vec<f64>,
    /// Overlap thresholds of the success curve.
    pub sr_thresholds: Vec<f64>,
}

impl EvalConfig {
    pub fn new(pr_threshold: f64) -> Self {
        EvalConfig {
            pr_threshold,
            pr_thresholds: (0..=50).map(f64::from).collect(),
            sr_thresholds: success_thresholds(),
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::new(20.0)
    }
}

/// The 21 overlap thresholds 0, 0.05, ..., 1.
pub fn success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// A sampled curve: `values[i]` belongs to `thresholds[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

fn check_lengths(results: &[BBox], gts: &[BBox]) -> Result<()> {
    if results.len() != gts.len() {
        return Err(DapError::LengthMismatch {
            left: results.len(),
            right: gts.len(),
        });
    }
    Ok(())
}

fn fraction(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

pub fn center_errors(results: &[BBox], gts: &[BBox]) -> Result<Vec<f64>> {
    check_lengths(results, gts)?;
    Ok(results.iter().zip(gts).map(|(r, g)| center_distance(r, g)).collect())
}

pub fn overlaps(results: &[BBox], gts: &[BBox]) -> Result<Vec<f64>> {
    check_lengths(results, gts)?;
    Ok(results.iter().zip(gts).map(|(r, g)| iou(r, g)).collect())
}

/// Fraction of errors `<= t` for every threshold `t`.
pub fn precision_from_errors(errors: &[f64], thresholds: &[f64]) -> Curve {
    Curve {
        thresholds: thresholds.to_vec(),
        values: thresholds
            .iter()
            .map(|&t| fraction(errors.iter().filter(|&&e| e <= t).count(), errors.len()))
            .collect(),
    }
}

/// Fraction of overlaps `> t` for every threshold `t`.
pub fn success_from_overlaps(overlaps: &[f64], thresholds: &[f64]) -> Curve {
    Curve {
        thresholds: thresholds.to_vec(),
        values: thresholds
            .iter()
            .map(|&t| fraction(overlaps.iter().filter(|&&o| o > t).count(), overlaps.len()))
            .collect(),
    }
}

pub fn precision_curve(results: &[BBox], gts: &[BBox], thresholds: &[f64]) -> Result<Curve> {
    Ok(precision_from_errors(&center_errors(results, gts)?, thresholds))
}

/// Success curve and its mean over the thresholds (the area under the
/// piecewise-constant plot).
pub fn success_curve(results: &[BBox], gts: &[BBox], thresholds: &[f64]) -> Result<(Curve, f64)> {
    let curve = success_from_overlaps(&overlaps(results, gts)?, thresholds);
    let sr = mean(&curve.values);
    Ok((curve, sr))
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Representative precision: fraction of frames within `threshold` pixels.
pub fn representative_pr(errors: &[f64], threshold: f64) -> f64 {
    precision_from_errors(errors, &[threshold]).values[0]
}

/// Representative success rate: mean success over `thresholds`.
pub fn representative_sr(overlaps: &[f64], thresholds: &[f64]) -> f64 {
    mean(&success_from_overlaps(overlaps, thresholds).values)
}

/// Per-frame errors and overlaps of one tracked sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEval {
    pub name: String,
    pub attributes: BTreeSet<Attribute>,
    pub center_errors: Vec<f64>,
    pub overlaps: Vec<f64>,
}

impl SequenceEval {
    pub fn new(name: &str, attributes: BTreeSet<Attribute>, results: &[BBox], gts: &[BBox]) -> Result<Self> {
        Ok(SequenceEval {
            name: name.to_string(),
            attributes,
            center_errors: center_errors(results, gts)?,
            overlaps: overlaps(results, gts)?,
        })
    }

    pub fn frames(&self) -> usize {
        self.overlaps.len()
    }

    pub fn mean_iou(&self) -> f64 {
        mean(&self.overlaps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub pr: f64,
    pub sr: f64,
    pub frames: usize,
}

/// One table row; `scores` is `None` when no sequence carries the tag.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeRow {
    /// Attribute tag, or `"ALL"`.
    pub label: String,
    pub scores: Option<Scores>,
}

fn pooled<'a>(seqs: impl Iterator<Item = &'a SequenceEval>, cfg: &EvalConfig) -> Option<Scores> {
    let mut errors = Vec::new();
    let mut ovl = Vec::new();
    for s in seqs {
        errors.extend_from_slice(&s.center_errors);
        ovl.extend_from_slice(&s.overlaps);
    }
    if ovl.is_empty() {
        return None;
    }
    Some(Scores {
        pr: representative_pr(&errors, cfg.pr_threshold),
        sr: representative_sr(&ovl, &cfg.sr_thresholds),
        frames: ovl.len(),
    })
}

/// Representative PR/SR per attribute, pooled over the frames of every
/// tagged sequence, followed by an `ALL` row.
pub fn attribute_breakdown(seqs: &[SequenceEval], cfg: &EvalConfig) -> Vec<AttributeRow> {
    let mut rows: Vec<AttributeRow> = Attribute::ALL
        .iter()
        .map(|a| AttributeRow {
            label: a.tag().to_string(),
            scores: pooled(seqs.iter().filter(|s| s.attributes.contains(a)), cfg),
        })
        .collect();
    rows.push(AttributeRow {
        label: "ALL".to_string(),
        scores: pooled(seqs.iter(), cfg),
    });
    rows
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| DapError::io(path, e))
}

pub fn curve_csv(curve: &Curve) -> String {
    let mut s = String::from("threshold,value\n");
    for (t, v) in curve.thresholds.iter().zip(&curve.values) {
        s.push_str(&format!("{t},{v}\n"));
    }
    s
}

pub fn parse_curve_csv(text: &str, path: &Path) -> Result<Curve> {
    let mut curve = Curve {
        thresholds: Vec::new(),
        values: Vec::new(),
    };
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = |m: &str| DapError::parse(path, i + 1, m);
        let (t, v) = line.split_once(',').ok_or_else(|| bad("expected threshold,value"))?;
        curve.thresholds.push(t.trim().parse().map_err(|_| bad("bad threshold"))?);
        curve.values.push(v.trim().parse().map_err(|_| bad("bad value"))?);
    }
    Ok(curve)
}

/// Summary row of one tracker variant on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub dataset: String,
    pub pr: f64,
    pub sr: f64,
    pub frames: usize,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("variant,dataset,pr,sr,frames\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.variant, r.dataset, r.pr, r.sr, r.frames));
    }
    s
}

pub fn attribute_csv(rows: &[AttributeRow]) -> String {
    let mut s = String::from("attribute,pr,sr,frames\n");
    for r in rows {
        match r.scores {
            Some(sc) => s.push_str(&format!("{},{},{},{}\n", r.label, sc.pr, sc.sr, sc.frames)),
            None => s.push_str(&format!("{},,,0\n", r.label)),
        }
    }
    s
}

/// Files written by [`export`].
#[derive(Debug, Clone, PartialEq)]
pub struct Exported {
    pub precision: PathBuf,
    pub success: PathBuf,
    pub attributes: PathBuf,
    pub summary: PathBuf,
}

/// Writes the pooled curves, the attribute table and the summary row of
/// one variant into `out_dir`.
pub fn export(
    seqs: &[SequenceEval],
    cfg: &EvalConfig,
    variant: &str,
    dataset: &str,
    out_dir: &Path,
) -> Result<Exported> {
    fs::create_dir_all(out_dir).map_err(|e| DapError::io(out_dir, e))?;
    let errors: Vec<f64> = seqs.iter().flat_map(|s| s.center_errors.iter().copied()).collect();
    let ovl: Vec<f64> = seqs.iter().flat_map(|s| s.overlaps.iter().copied()).collect();
    let pr_curve = precision_from_errors(&errors, &cfg.pr_thresholds);
    let sr_curve = success_from_overlaps(&ovl, &cfg.sr_thresholds);
    let rows = attribute_breakdown(seqs, cfg);
    let all = rows.last().and_then(|r| r.scores);
    let summary = SummaryRow {
        variant: variant.to_string(),
        dataset: dataset.to_string(),
        pr: all.map_or(0.0, |s| s.pr),
        sr: all.map_or(0.0, |s| s.sr),
        frames: all.map_or(0, |s| s.frames),
    };
    let out = Exported {
        precision: out_dir.join("precision.csv"),
        success: out_dir.join("success.csv"),
        attributes: out_dir.join("attributes.csv"),
        summary: out_dir.join("summary.csv"),
    };
    write(&out.precision, &curve_csv(&pr_curve))?;
    write(&out.success, &curve_csv(&sr_curve))?;
    write(&out.attributes, &attribute_csv(&rows))?;
    write(&out.summary, &summary_csv(&[summary]))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64) -> BBox {
        BBox::new(x, y, 10.0, 10.0).unwrap()
    }

    #[test]
    fn center_error_example() {
        let gts = vec![b(0.0, 0.0); 4];
        let res = vec![b(0.0, 0.0), b(3.0, 0.0), b(0.0, 10.0), b(30.0, 0.0)];
        let curve = precision_curve(&res, &gts, &[5.0]).unwrap();
        assert_eq!(curve.values, vec![0.5]);
        assert_eq!(representative_pr(&[0.0, 3.0, 10.0, 30.0], 5.0), 0.5);
    }

    #[test]
    fn precision_is_inclusive() {
        assert_eq!(representative_pr(&[5.0], 5.0), 1.0);
    }

    #[test]
    fn success_examples() {
        let t = success_thresholds();
        assert_eq!(representative_sr(&[1.0, 1.0, 0.0, 0.0], &t), 10.0 / 21.0);
        assert_eq!(representative_sr(&[0.0; 5], &t), 0.0);
        let gts = vec![b(1.0, 2.0), b(5.0, 7.0)];
        let (curve, sr) = success_curve(&gts, &gts, &t).unwrap();
        assert_eq!(sr, 20.0 / 21.0);
        assert_eq!(curve.values[20], 0.0);
        assert!(precision_curve(&gts, &gts, &[0.0, 5.0]).unwrap().values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_thresholds_and_mismatch() {
        assert!(precision_curve(&[b(0.0, 0.0)], &[b(0.0, 0.0)], &[]).unwrap().values.is_empty());
        assert!(matches!(
            precision_curve(&[b(0.0, 0.0)], &[], &[1.0]),
            Err(DapError::LengthMismatch { left: 1, right: 0 })
        ));
    }

    #[test]
    fn attribute_table() {
        let cfg = EvalConfig::new(5.0);
        let s1 = SequenceEval {
            name: "a".into(),
            attributes: [Attribute::NO, Attribute::FM].into(),
            center_errors: vec![0.0, 10.0],
            overlaps: vec![1.0, 0.0],
        };
        let s2 = SequenceEval {
            name: "b".into(),
            attributes: [Attribute::FM].into(),
            center_errors: vec![1.0, 2.0],
            overlaps: vec![0.5, 0.5],
        };
        let rows = attribute_breakdown(&[s1.clone(), s2], &cfg);
        let get = |l: &str| rows.iter().find(|r| r.label == l).unwrap().scores;
        let no = get("NO").unwrap();
        assert_eq!(no.pr, 0.5);
        assert_eq!(no.sr, representative_sr(&s1.overlaps, &cfg.sr_thresholds));
        assert_eq!(get("TC"), None);
        // frame-weighted: 3 of 4 frames within 5 px
        assert_eq!(get("FM").unwrap().pr, 0.75);
        assert_eq!(get("ALL").unwrap().frames, 4);
    }

    #[test]
    fn attribute_parsing() {
        assert_eq!("def".parse::<Attribute>().unwrap(), Attribute::DEF);
        assert!(matches!("XX".parse::<Attribute>(), Err(DapError::UnknownAttribute(_))));
    }

    #[test]
    fn csv_round_trip() {
        let curve = Curve {
            thresholds: success_thresholds(),
            values: (0..21).map(|i| (i as f64 * 0.1).sin() / 3.0).collect(),
        };
        let back = parse_curve_csv(&curve_csv(&curve), Path::new("x")).unwrap();
        assert_eq!(back, curve);
    }
}
