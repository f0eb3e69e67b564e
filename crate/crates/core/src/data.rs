//! Trajectory data model and featurization.
//!
//! A frame is a list of bounding boxes in roster order. Each box becomes a
//! `4 + m` vector: its corners followed by the centroid distance to every
//! roster object, itself included (that entry is always zero).
//!
//! On disk a dataset is JSON Lines: a header `{"roster": [...]}` followed by
//! one demonstration per line,
//! `{"id": "...", "frames": [{"boxes": [[x1, y1, x2, y2], ...]}, ...], "meta": {...}}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Axis-aligned box in normalized image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from([x1, y1, x2, y2]: [f64; 4]) -> Self {
        BoundingBox { x1, y1, x2, y2 }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BoundingBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    /// Normalizes pixel coordinates by the frame size.
    pub fn from_pixels(x1: f64, y1: f64, x2: f64, y2: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::validation(format!("frame size {width}x{height}")));
        }
        Self::new(x1 / width, y1 / height, x2 / width, y2 / height)
    }

    pub fn validate(&self) -> Result<()> {
        let c = [self.x1, self.y1, self.x2, self.y2];
        if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::validation(format!("box {c:?} has a coordinate outside [0, 1]")));
        }
        if self.x1 > self.x2 || self.y1 > self.y2 {
            return Err(Error::validation(format!("box {c:?} has inverted corners")));
        }
        Ok(())
    }

    pub fn centroid(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }
}

/// One object's `[x1, y1, x2, y2, d_1, ..., d_m]` vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectFeature<'a>(&'a [f64]);

impl<'a> ObjectFeature<'a> {
    pub fn as_slice(&self) -> &'a [f64] {
        self.0
    }

    pub fn corners(&self) -> &'a [f64] {
        &self.0[..4]
    }

    /// Centroid distances to each roster object.
    pub fn distances(&self) -> &'a [f64] {
        &self.0[4..]
    }
}

/// Fully connected object graph for one frame: `m` rows of `4 + m`
/// features. Edges are implicit (every ordered pair `i != j`).
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGraph {
    features: Matrix,
}

impl FrameGraph {
    pub fn from_features(features: Matrix) -> Result<Self> {
        let (m, f) = features.shape();
        if m == 0 || f != 4 + m {
            return Err(Error::shape(format!("frame graph needs m x (4 + m) features, got {m}x{f}")));
        }
        if !features.is_finite() {
            return Err(Error::validation("frame features must be finite"));
        }
        Ok(FrameGraph { features })
    }

    pub fn object_count(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn object(&self, i: usize) -> ObjectFeature<'_> {
        ObjectFeature(self.features.row(i))
    }
}

/// Builds the object graph for one frame. Box order is the roster order.
pub fn featurize_frame(boxes: &[BoundingBox]) -> Result<FrameGraph> {
    if boxes.is_empty() {
        return Err(Error::contract("cannot featurize a frame with no boxes"));
    }
    for b in boxes {
        b.validate()?;
    }
    let m = boxes.len();
    let centroids: Vec<(f64, f64)> = boxes.iter().map(BoundingBox::centroid).collect();
    let mut features = Matrix::zeros(m, 4 + m);
    for (i, b) in boxes.iter().enumerate() {
        let row = features.row_mut(i);
        row[..4].copy_from_slice(&<[f64; 4]>::from(*b));
        let (xi, yi) = centroids[i];
        for (k, &(xk, yk)) in centroids.iter().enumerate() {
            // hypot keeps d_ik and d_ki bitwise equal
            row[4 + k] = if k == i { 0.0 } else { (xi - xk).hypot(yi - yk) };
        }
    }
    FrameGraph::from_features(features)
}

/// An ordered sequence of frames. Only boxes are stored on disk; the
/// object graphs are derived.
#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub id: String,
    boxes: Vec<Vec<BoundingBox>>,
    frames: Vec<FrameGraph>,
    pub meta: Map<String, Value>,
}

impl Demonstration {
    /// Needs at least two frames with a constant object count.
    pub fn new(id: impl Into<String>, boxes: Vec<Vec<BoundingBox>>, meta: Map<String, Value>) -> Result<Self> {
        let id = id.into();
        if boxes.len() < 2 {
            return Err(Error::validation(format!("demo {id:?}: needs at least 2 frames, has {}", boxes.len())));
        }
        let m = boxes[0].len();
        let mut frames = Vec::with_capacity(boxes.len());
        for (t, frame) in boxes.iter().enumerate() {
            if frame.len() != m {
                return Err(Error::validation(format!(
                    "demo {id:?}: frame {t} has {} boxes, frame 0 has {m}",
                    frame.len()
                )));
            }
            frames.push(featurize_frame(frame).map_err(|e| Error::validation(format!("demo {id:?}, frame {t}: {e}")))?);
        }
        Ok(Demonstration { id, boxes, frames, meta })
    }

    pub fn frames(&self) -> &[FrameGraph] {
        &self.frames
    }

    pub fn boxes(&self) -> &[Vec<BoundingBox>] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn object_count(&self) -> usize {
        self.boxes[0].len()
    }

    pub fn first(&self) -> &FrameGraph {
        &self.frames[0]
    }

    pub fn last(&self) -> &FrameGraph {
        &self.frames[self.frames.len() - 1]
    }

    /// Keeps the frames at `indices` (assumed sorted, in range).
    pub fn select(&self, indices: &[usize]) -> Demonstration {
        Demonstration {
            id: self.id.clone(),
            boxes: indices.iter().map(|&i| self.boxes[i].clone()).collect(),
            frames: indices.iter().map(|&i| self.frames[i].clone()).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Sorted frame indices for [`subsample_frames`]: every index when
/// `len <= k`, otherwise both endpoints plus `k - 2` interior frames drawn
/// uniformly without replacement.
pub fn subsample_indices<R: Rng + ?Sized>(len: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::contract(format!("subsample size must be >= 2, got {k}")));
    }
    if len <= k {
        return Ok((0..len).collect());
    }
    let mut picked: Vec<usize> = index::sample(rng, len - 2, k - 2).into_iter().map(|i| i + 1).collect();
    picked.sort_unstable();
    let mut out = Vec::with_capacity(k);
    out.push(0);
    out.extend(picked);
    out.push(len - 1);
    Ok(out)
}

pub fn subsample_frames(demo: &Demonstration, k: usize, seed: u64) -> Result<Demonstration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = subsample_indices(demo.len(), k, &mut rng)?;
    Ok(demo.select(&idx))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub roster: Vec<String>,
    pub demos: Vec<Demonstration>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    roster: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    boxes: Vec<BoundingBox>,
}

#[derive(Serialize, Deserialize)]
struct DemoRecord {
    id: String,
    frames: Vec<FrameRecord>,
    #[serde(default)]
    meta: Map<String, Value>,
}

impl TrajectoryDataset {
    pub fn new(roster: Vec<String>, demos: Vec<Demonstration>) -> Result<Self> {
        let ds = TrajectoryDataset { roster, demos };
        ds.validate()?;
        Ok(ds)
    }

    pub fn object_count(&self) -> usize {
        self.roster.len()
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.roster.is_empty() {
            return Err(Error::validation("roster is empty"));
        }
        for d in &self.demos {
            if d.object_count() != self.roster.len() {
                return Err(Error::validation(format!(
                    "demo {:?} has {} objects per frame, roster has {}",
                    d.id,
                    d.object_count(),
                    self.roster.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_writer<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &Header { roster: self.roster.clone() })?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        for d in &self.demos {
            let rec = DemoRecord {
                id: d.id.clone(),
                frames: d.boxes.iter().map(|b| FrameRecord { boxes: b.clone() }).collect(),
                meta: d.meta.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    pub fn from_reader<R: BufRead>(r: R) -> Result<Self> {
        let mut roster: Option<Vec<String>> = None;
        let mut demos = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| Error::Parse { line: lineno, message: e.to_string() };
            match &roster {
                None => {
                    let h: Header = serde_json::from_str(&line).map_err(parse_err)?;
                    if h.roster.is_empty() {
                        return Err(Error::validation("roster is empty"));
                    }
                    roster = Some(h.roster);
                }
                Some(names) => {
                    let rec: DemoRecord = serde_json::from_str(&line).map_err(parse_err)?;
                    for (t, f) in rec.frames.iter().enumerate() {
                        if f.boxes.len() != names.len() {
                            return Err(Error::validation(format!(
                                "demo {:?} (line {lineno}), frame {t}: {} boxes for a {}-object roster",
                                rec.id,
                                f.boxes.len(),
                                names.len()
                            )));
                        }
                    }
                    let boxes = rec.frames.into_iter().map(|f| f.boxes).collect();
                    demos.push(Demonstration::new(rec.id, boxes, rec.meta)?);
                }
            }
        }
        let roster = roster.ok_or(Error::Parse { line: 1, message: "missing roster header".into() })?;
        TrajectoryDataset::new(roster, demos)
    }
}

pub fn save_dataset(ds: &TrajectoryDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    ds.to_writer(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<TrajectoryDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    TrajectoryDataset::from_reader(BufReader::new(file))
}
