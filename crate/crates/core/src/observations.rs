//! Observation classes and the state-to-observation process.
//!
//! Class ids 0 and 1 are reserved for home (also shown on fail) and graph-end
//! unless `h_ids`/`e_ids` ranges are configured. Wait and decision states draw
//! from their configured id ranges, either uniformly on every read or, under
//! the `mdp_*` flags, as a fixed unique id per state.
//!
//! In 2D mode each class is a 12x12 image: a random 4x4 blueprint over
//! `{0, 1, 2}` upscaled by 3 and turned by a base rotation of 0, 30 or 60
//! degrees. Every read re-renders the class with a small random rotation and
//! additive uniform noise.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::topology::{self, GraphShape, StateId, StateKind, TopologyError};

pub const HOME_CLASS: u32 = 0;
pub const END_CLASS: u32 = 1;

pub const BLUEPRINT_SIDE: usize = 4;
pub const UPSCALE: usize = 3;
pub const IMAGE_SIDE: usize = BLUEPRINT_SIDE * UPSCALE;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// `3^16` blueprints times three base rotations.
pub const IMAGE_SPACE: u64 = 129_140_163;

pub const MIN_IMAGES: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservationError {
    #[error("{key}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("could not draw {0} distinct images")]
    ImageSpaceExhausted(u32),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ObservationError {
    ObservationError::Invalid { key, reason: reason.into() }
}

/// Inclusive class-id range, written `[lo, hi]` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct IdRange {
    pub lo: u32,
    pub hi: u32,
}

impl IdRange {
    pub const fn new(lo: u32, hi: u32) -> Self {
        Self { lo, hi }
    }

    pub const fn single(id: u32) -> Self {
        Self { lo: id, hi: id }
    }

    pub fn len(&self) -> u64 {
        if self.hi < self.lo {
            0
        } else {
            (self.hi - self.lo) as u64 + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: u32) -> bool {
        (self.lo..=self.hi).contains(&id)
    }

    fn overlaps(&self, other: &IdRange) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

impl From<[u32; 2]> for IdRange {
    fn from([lo, hi]: [u32; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<IdRange> for [u32; 2] {
    fn from(r: IdRange) -> Self {
        [r.lo, r.hi]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationConfig {
    pub one_d: bool,
    pub nr_images: u32,
    pub mdp_d: bool,
    pub mdp_w: bool,
    pub w_ids: IdRange,
    pub d_ids: IdRange,
    pub h_ids: IdRange,
    pub e_ids: IdRange,
    pub noise_on_read: f64,
    pub rotation_on_read: f64,
    pub image_seed: u64,
}

impl ObservationConfig {
    /// All range and cardinality checks, so that nothing can fail at step time.
    pub fn validate(&self, shape: &GraphShape) -> Result<(), ObservationError> {
        if self.nr_images < MIN_IMAGES {
            return Err(invalid("image_set.nr_images", format!("must be >= {MIN_IMAGES}, got {}", self.nr_images)));
        }
        if self.nr_images as u64 > IMAGE_SPACE {
            return Err(invalid(
                "image_set.nr_images",
                format!("{} exceeds the {IMAGE_SPACE} distinct images available", self.nr_images),
            ));
        }
        if !(self.noise_on_read >= 0.0 && self.noise_on_read.is_finite()) {
            return Err(invalid("image_set.noise_on_read", format!("must be >= 0, got {}", self.noise_on_read)));
        }
        if !(self.rotation_on_read >= 0.0 && self.rotation_on_read.is_finite()) {
            return Err(invalid(
                "image_set.rotation_on_read",
                format!("must be >= 0 degrees, got {}", self.rotation_on_read),
            ));
        }
        let ranges = [
            ("observations.h_ids", self.h_ids),
            ("observations.e_ids", self.e_ids),
            ("observations.W_IDs", self.w_ids),
            ("observations.D_IDs", self.d_ids),
        ];
        for (key, r) in ranges {
            if r.is_empty() {
                return Err(invalid(key, format!("start {} is after end {}", r.lo, r.hi)));
            }
            if r.hi >= self.nr_images {
                return Err(invalid(
                    key,
                    format!("[{}, {}] exceeds the image set [0, {}]", r.lo, r.hi, self.nr_images - 1),
                ));
            }
        }
        for (i, (ka, a)) in ranges.iter().enumerate() {
            for (kb, b) in &ranges[i + 1..] {
                if a.overlaps(b) {
                    return Err(invalid(kb, format!("[{}, {}] overlaps {ka} [{}, {}]", b.lo, b.hi, a.lo, a.hi)));
                }
            }
        }
        if self.mdp_d {
            let needed = topology::count_decision_states(shape)?;
            if self.d_ids.len() < needed {
                return Err(invalid(
                    "observations.D_IDs",
                    format!("MDP_D needs {needed} ids, range holds {}", self.d_ids.len()),
                ));
            }
        }
        if self.mdp_w {
            let needed = topology::count_wait_states(shape)?;
            if self.w_ids.len() < needed {
                return Err(invalid(
                    "observations.W_IDs",
                    format!("MDP_W needs {needed} ids, range holds {}", self.w_ids.len()),
                ));
            }
        }
        if self.one_d {
            topology::count_states(shape)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseRotation {
    Deg0,
    Deg30,
    Deg60,
}

impl BaseRotation {
    pub fn degrees(self) -> u32 {
        match self {
            BaseRotation::Deg0 => 0,
            BaseRotation::Deg30 => 30,
            BaseRotation::Deg60 => 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageClass {
    pub class_id: u32,
    pub blueprint: [[u8; BLUEPRINT_SIDE]; BLUEPRINT_SIDE],
    pub base_rotation: BaseRotation,
    /// Upscaled and rotated blueprint, row-major, values in `{0, 1, 2}`.
    pub canonical: [u8; IMAGE_PIXELS],
}

impl ImageClass {
    fn new(class_id: u32, blueprint: [[u8; BLUEPRINT_SIDE]; BLUEPRINT_SIDE], base_rotation: BaseRotation) -> Self {
        let mut upscaled = [0u8; IMAGE_PIXELS];
        for (i, px) in upscaled.iter_mut().enumerate() {
            let (row, col) = (i / IMAGE_SIDE, i % IMAGE_SIDE);
            *px = blueprint[row / UPSCALE][col / UPSCALE];
        }
        let canonical = rotate_nearest(&upscaled, base_rotation.degrees() as f64);
        Self { class_id, blueprint, base_rotation, canonical }
    }

    /// Canonical pixels scaled from `{0, 1, 2}` to `{0, 0.5, 1}`.
    pub fn normalized(&self) -> [f32; IMAGE_PIXELS] {
        self.canonical.map(|v| v as f32 * 0.5)
    }

    /// Plain (P2) PGM of the canonical image, grey levels 0, 128, 255.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n");
        for row in self.canonical.chunks(IMAGE_SIDE) {
            let line: Vec<&str> = row.iter().map(|&v| ["0", "128", "255"][v as usize]).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// The 16 blueprint cells, row-major, as a digit string.
    pub fn blueprint_digits(&self) -> String {
        self.blueprint.iter().flatten().map(|&v| char::from(b'0' + v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub seed: u64,
    pub classes: Vec<ImageClass>,
}

impl ImageSet {
    pub fn get(&self, class_id: u32) -> Option<&ImageClass> {
        self.classes.get(class_id as usize)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Every class as a PGM, concatenated in id order.
    pub fn dump(&self) -> String {
        self.classes.iter().map(ImageClass::to_pgm).collect()
    }
}

/// Draws `nr_images` classes with pairwise-distinct canonical images.
pub fn build_image_set(nr_images: u32, seed: u64) -> Result<ImageSet, ObservationError> {
    if nr_images as u64 > IMAGE_SPACE {
        return Err(invalid("image_set.nr_images", format!("{nr_images} exceeds {IMAGE_SPACE}")));
    }
    let mut rng = rng::substream(seed, "image_set", 0);
    let mut seen: HashSet<[u8; IMAGE_PIXELS]> = HashSet::with_capacity(nr_images as usize);
    let mut classes = Vec::with_capacity(nr_images as usize);
    // Far more attempts than a 3^17 space ever needs for any realistic set size.
    let mut attempts_left = nr_images as u64 * 64 + 1024;
    while classes.len() < nr_images as usize {
        if attempts_left == 0 {
            return Err(ObservationError::ImageSpaceExhausted(nr_images));
        }
        attempts_left -= 1;
        let mut blueprint = [[0u8; BLUEPRINT_SIDE]; BLUEPRINT_SIDE];
        for cell in blueprint.iter_mut().flatten() {
            *cell = rng.gen_range(0..3);
        }
        let rotation = match rng.gen_range(0..3) {
            0 => BaseRotation::Deg0,
            1 => BaseRotation::Deg30,
            _ => BaseRotation::Deg60,
        };
        let class = ImageClass::new(classes.len() as u32, blueprint, rotation);
        if seen.insert(class.canonical) {
            classes.push(class);
        }
    }
    Ok(ImageSet { seed, classes })
}

fn rotate_nearest(src: &[u8; IMAGE_PIXELS], degrees: f64) -> [u8; IMAGE_PIXELS] {
    if degrees == 0.0 {
        return *src;
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let c = (IMAGE_SIDE as f64 - 1.0) / 2.0;
    let mut out = [0u8; IMAGE_PIXELS];
    for (i, px) in out.iter_mut().enumerate() {
        let (y, x) = ((i / IMAGE_SIDE) as f64 - c, (i % IMAGE_SIDE) as f64 - c);
        let sx = (cos * x + sin * y + c).round();
        let sy = (-sin * x + cos * y + c).round();
        if (0.0..IMAGE_SIDE as f64).contains(&sx) && (0.0..IMAGE_SIDE as f64).contains(&sy) {
            *px = src[sy as usize * IMAGE_SIDE + sx as usize];
        }
    }
    out
}

/// Bilinear rotation about the image centre; samples outside the frame read as 0.
pub fn rotate_bilinear(src: &[f32; IMAGE_PIXELS], degrees: f64) -> [f32; IMAGE_PIXELS] {
    if degrees == 0.0 {
        return *src;
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let c = (IMAGE_SIDE as f64 - 1.0) / 2.0;
    let at = |row: i64, col: i64| -> f64 {
        if (0..IMAGE_SIDE as i64).contains(&row) && (0..IMAGE_SIDE as i64).contains(&col) {
            src[row as usize * IMAGE_SIDE + col as usize] as f64
        } else {
            0.0
        }
    };
    let mut out = [0f32; IMAGE_PIXELS];
    for (i, px) in out.iter_mut().enumerate() {
        let (y, x) = ((i / IMAGE_SIDE) as f64 - c, (i % IMAGE_SIDE) as f64 - c);
        let sx = cos * x + sin * y + c;
        let sy = -sin * x + cos * y + c;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
        let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
        *px = (top * (1.0 - fy) + bottom * fy) as f32;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// One-hot vector over all states, stored as the hot index.
    OneHot { index: u64, len: u64 },
    /// Normalized 12x12 image, row-major, values in `[0, 1]`.
    Image(Box<[f32; IMAGE_PIXELS]>),
    /// Rendering was skipped; only the class label is available.
    Label,
}

impl Payload {
    pub fn to_vec(&self) -> Vec<f32> {
        match self {
            Payload::OneHot { index, len } => {
                let mut v = vec![0.0; *len as usize];
                v[*index as usize] = 1.0;
                v
            }
            Payload::Image(px) => px.to_vec(),
            Payload::Label => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Ground-truth class label. Agents that respect partial observability
    /// should treat this as a stand-in for a perfect classifier of `payload`.
    pub class_id: u32,
    pub payload: Payload,
}

/// The stochastic map from states to observations for one graph.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    cfg: ObservationConfig,
    shape: GraphShape,
    state_count: u64,
    /// `nodes_above(level)` for every level, for the unique-id assignment.
    level_offsets: Vec<u64>,
    images: Option<Arc<ImageSet>>,
}

impl ObservationModel {
    pub fn new(cfg: ObservationConfig, shape: GraphShape) -> Result<Self, ObservationError> {
        cfg.validate(&shape)?;
        let images = if cfg.one_d {
            None
        } else {
            Some(Arc::new(build_image_set(cfg.nr_images, cfg.image_seed)?))
        };
        Self::with_images(cfg, shape, images)
    }

    /// Reuses an already built image set (must match `nr_images` and `image_seed`).
    pub fn with_images(
        cfg: ObservationConfig,
        shape: GraphShape,
        images: Option<Arc<ImageSet>>,
    ) -> Result<Self, ObservationError> {
        cfg.validate(&shape)?;
        if let Some(set) = &images {
            if set.len() != cfg.nr_images as usize || set.seed != cfg.image_seed {
                return Err(invalid("image_set", "supplied image set does not match nr_images/seed"));
            }
        }
        let state_count = topology::count_states(&shape)?;
        let level_offsets = (0..=shape.depth())
            .map(|level| topology::nodes_above(&shape, level))
            .collect::<Result<_, _>>()?;
        Ok(Self { cfg, shape, state_count, level_offsets, images })
    }

    pub fn config(&self) -> &ObservationConfig {
        &self.cfg
    }

    pub fn images(&self) -> Option<&Arc<ImageSet>> {
        self.images.as_ref()
    }

    /// Length of the flattened observation vector.
    pub fn observation_len(&self) -> u64 {
        if self.cfg.one_d {
            self.state_count
        } else {
            IMAGE_PIXELS as u64
        }
    }

    fn ordinal(&self, state: &StateId) -> u64 {
        self.level_offsets[state.depth() as usize] + state.path_rank(self.shape.branching())
    }

    pub fn class_for_state<R: Rng + ?Sized>(&self, state: &StateId, rng: &mut R) -> u32 {
        match state.kind() {
            StateKind::Home | StateKind::Fail => self.cfg.h_ids.draw(rng),
            StateKind::End => self.cfg.e_ids.draw(rng),
            StateKind::Decision if self.cfg.mdp_d => self.cfg.d_ids.lo + self.ordinal(state) as u32,
            StateKind::Decision => self.cfg.d_ids.draw(rng),
            StateKind::Wait if self.cfg.mdp_w => self.cfg.w_ids.lo + self.ordinal(state) as u32,
            StateKind::Wait => self.cfg.w_ids.draw(rng),
        }
    }

    /// Produces the observation payload for `class_id` shown at `state`.
    ///
    /// 1D mode ignores augmentation and returns the state's one-hot vector.
    pub fn render<R: Rng + ?Sized>(&self, class_id: u32, state: &StateId, rng: &mut R) -> Observation {
        let payload = match &self.images {
            None => Payload::OneHot {
                index: state.index(&self.shape).expect("cursor states are valid"),
                len: self.state_count,
            },
            Some(set) => {
                let class = set.get(class_id).expect("class ids are validated against nr_images");
                Payload::Image(Box::new(augment(
                    &class.normalized(),
                    self.cfg.rotation_on_read,
                    self.cfg.noise_on_read,
                    rng,
                )))
            }
        };
        Observation { class_id, payload }
    }
}

/// Random rotation in `[-max_rotation, max_rotation]` degrees, then uniform
/// noise in `[-noise, noise]` per pixel, clipped to `[0, 1]`.
pub fn augment<R: Rng + ?Sized>(
    image: &[f32; IMAGE_PIXELS],
    max_rotation: f64,
    noise: f64,
    rng: &mut R,
) -> [f32; IMAGE_PIXELS] {
    let mut out = if max_rotation > 0.0 {
        rotate_bilinear(image, rng.gen_range(-max_rotation..=max_rotation))
    } else {
        *image
    };
    if noise > 0.0 {
        for px in out.iter_mut() {
            *px += rng.gen_range(-noise..=noise) as f32;
        }
    }
    for px in out.iter_mut() {
        *px = px.clamp(0.0, 1.0);
    }
    out
}
