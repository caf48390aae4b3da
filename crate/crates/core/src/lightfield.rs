//! Light-field scenes, the dataset layout, and (LR, REF, HR) sample generation.
//!
//! On disk a dataset is `<root>/<split>/<scene>/view_<r>_<c>.png` plus a
//! `manifest.txt`:
//!
//! ```text
//! # optional settings
//! grid = 8x8
//! crop = 320x512
//! split_seed = 17
//! [train]
//! scene_a
//! [test]
//! scene_b
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::Rng;

use crate::error::{domain_err, CrossNetError, Result};
use crate::imaging::{resize_bicubic, Image, SIZE_MULTIPLE};
use crate::io::load_png;

/// Angular grid used by the Lytro datasets.
pub const DEFAULT_GRID: usize = 8;
/// Largest parallax offset of the reference augmentation, in pixels.
pub const MAX_PARALLAX_OFFSET: i64 = 15;
/// Raw Lytro view size and the crop taken from it.
pub const LYTRO_SOURCE: (usize, usize) = (376, 541);
pub const LYTRO_CROP: (usize, usize) = (320, 512);

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// Angular position `(row, col)`.
pub type Pos = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct LightField {
    scene_id: String,
    grid: usize,
    views: Vec<Image>,
}

impl LightField {
    /// `views` are row-major over a `grid × grid` angular lattice.
    pub fn new(scene_id: impl Into<String>, grid: usize, views: Vec<Image>) -> Result<Self> {
        if grid == 0 || views.len() != grid * grid {
            return domain_err!("a {0}x{0} light field needs {1} views, got {2}", grid, grid * grid, views.len());
        }
        let shape = views[0].tensor().shape();
        if views.iter().any(|v| v.tensor().shape() != shape) {
            return domain_err!("light-field views differ in size");
        }
        Ok(Self {
            scene_id: scene_id.into(),
            grid,
            views,
        })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn view(&self, (r, c): Pos) -> &Image {
        assert!(r < self.grid && c < self.grid, "angular position ({r}, {c}) outside the grid");
        &self.views[r * self.grid + c]
    }

    pub fn size(&self) -> (usize, usize) {
        self.views[0].size()
    }
}

/// One training or evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub lr: Image,
    pub reference: Image,
    pub hr: Image,
    pub lr_pos: Pos,
    pub ref_pos: Pos,
    pub scale: usize,
    /// `<scene>_<lr row>_<lr col>`, used to look up precomputed SISR output.
    pub id: String,
}

impl SamplePair {
    pub fn check(&self) -> Result<()> {
        if self.hr.size() != self.reference.size() {
            return domain_err!("hr {:?} and reference {:?} differ", self.hr.size(), self.reference.size());
        }
        let (h, w) = self.hr.size();
        if self.lr.size() != (h / self.scale, w / self.scale) || h % self.scale != 0 || w % self.scale != 0 {
            return domain_err!("lr {:?} is not hr {:?} / {}", self.lr.size(), self.hr.size(), self.scale);
        }
        Ok(())
    }
}

/// Bicubic antialiased downsampling by `scale`.
pub fn make_lr(hr: &Image, scale: usize) -> Result<Image> {
    if scale == 0 || hr.height() % scale != 0 || hr.width() % scale != 0 {
        return domain_err!("{}x{} is not divisible by {}", hr.height(), hr.width(), scale);
    }
    resize_bicubic(hr, 1.0 / scale as f64)
}

pub fn pair_id(scene: &str, lr_pos: Pos) -> String {
    format!("{scene}_{}_{}", lr_pos.0, lr_pos.1)
}

pub fn make_pair(lf: &LightField, lr_pos: Pos, ref_pos: Pos, scale: usize) -> Result<SamplePair> {
    let hr = lf.view(lr_pos).clone();
    let pair = SamplePair {
        lr: make_lr(&hr, scale)?,
        reference: lf.view(ref_pos).clone(),
        hr,
        lr_pos,
        ref_pos,
        scale,
        id: pair_id(lf.scene_id(), lr_pos),
    };
    pair.check()?;
    Ok(pair)
}

/// Independent uniform draws of the LR and reference positions.
pub fn sample_positions<R: Rng + ?Sized>(grid: usize, rng: &mut R) -> (Pos, Pos) {
    let lr = (rng.random_range(0..grid), rng.random_range(0..grid));
    let rf = (rng.random_range(0..grid), rng.random_range(0..grid));
    (lr, rf)
}

pub fn sample_training_pair<R: Rng + ?Sized>(lf: &LightField, scale: usize, rng: &mut R) -> Result<SamplePair> {
    let (lr_pos, ref_pos) = sample_positions(lf.grid(), rng);
    make_pair(lf, lr_pos, ref_pos, scale)
}

/// Which angular pairs an evaluation uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Protocol {
    /// Reference at (0, 0), LR at (i, i) for `0 < i < grid`.
    #[default]
    Diagonal,
    /// Reference at (0, 0), LR at (i, 0): the horizontal-parallax layout of
    /// the generalization datasets.
    Column,
}

impl Protocol {
    pub fn positions(self, grid: usize) -> Vec<(Pos, Pos)> {
        (1..grid)
            .map(|i| match self {
                Protocol::Diagonal => ((i, i), (0, 0)),
                Protocol::Column => ((i, 0), (0, 0)),
            })
            .collect()
    }
}

/// Evaluation pairs: reference (0, 0), LR (i, i) for `i = 1..grid`.
pub fn test_pairs(lf: &LightField, scale: usize) -> Result<Vec<SamplePair>> {
    pairs_for(lf, scale, Protocol::Diagonal)
}

pub fn pairs_for(lf: &LightField, scale: usize, protocol: Protocol) -> Result<Vec<SamplePair>> {
    protocol
        .positions(lf.grid())
        .into_iter()
        .map(|(lr, rf)| make_pair(lf, lr, rf, scale))
        .collect()
}

/// Translates the reference by `(dx, dy)` with edge-clamped fill.
pub fn shift_reference(pair: &SamplePair, dx: i64, dy: i64) -> SamplePair {
    SamplePair {
        reference: pair.reference.shifted(dx, dy),
        ..pair.clone()
    }
}

/// Random reference offset drawn uniformly from `[-15, 15]²`.
pub fn draw_parallax_offset<R: Rng + ?Sized>(rng: &mut R) -> (i64, i64) {
    (
        rng.random_range(-MAX_PARALLAX_OFFSET..=MAX_PARALLAX_OFFSET),
        rng.random_range(-MAX_PARALLAX_OFFSET..=MAX_PARALLAX_OFFSET),
    )
}

pub fn augment_parallax<R: Rng + ?Sized>(pair: &SamplePair, rng: &mut R) -> SamplePair {
    let (dx, dy) = draw_parallax_offset(rng);
    shift_reference(pair, dx, dy)
}

/// Aligned random crop: `crop × crop` of hr/ref and the matching LR window.
pub fn random_crop<R: Rng + ?Sized>(pair: &SamplePair, crop: usize, rng: &mut R) -> Result<SamplePair> {
    let s = pair.scale;
    let (h, w) = pair.hr.size();
    if crop % s != 0 || crop > h || crop > w {
        return domain_err!("crop {} does not fit {}x{} at scale {}", crop, h, w, s);
    }
    if (crop, crop) == (h, w) {
        return Ok(pair.clone());
    }
    let y = rng.random_range(0..=(h - crop) / s) * s;
    let x = rng.random_range(0..=(w - crop) / s) * s;
    Ok(SamplePair {
        lr: pair.lr.crop(y / s, x / s, crop / s, crop / s),
        reference: pair.reference.crop(y, x, crop, crop),
        hr: pair.hr.crop(y, x, crop, crop),
        ..pair.clone()
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub grid: Option<usize>,
    pub crop: Option<(usize, usize)>,
    pub split_seed: Option<u64>,
}

fn parse_dims(v: &str) -> Option<(usize, usize)> {
    let (a, b) = v.split_once('x')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        let mut section: Option<Split> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| CrossNetError::Manifest(format!("line {}: {msg}", i + 1));
            match line {
                "[train]" => section = Some(Split::Train),
                "[test]" => section = Some(Split::Test),
                _ if line.starts_with('[') => return Err(bad(format!("unknown section {line}"))),
                _ => {
                    if let Some((k, v)) = line.split_once('=') {
                        let v = v.trim();
                        match k.trim() {
                            "grid" => {
                                let (r, c) = parse_dims(v).ok_or_else(|| bad(format!("bad grid `{v}`")))?;
                                if r != c || r == 0 {
                                    return Err(bad(format!("grid must be square, got {v}")));
                                }
                                m.grid = Some(r);
                            }
                            "crop" => {
                                let (h, w) = parse_dims(v).ok_or_else(|| bad(format!("bad crop `{v}`")))?;
                                if h % SIZE_MULTIPLE != 0 || w % SIZE_MULTIPLE != 0 || h == 0 || w == 0 {
                                    return Err(bad(format!("crop {v} is not a positive multiple of {SIZE_MULTIPLE}")));
                                }
                                m.crop = Some((h, w));
                            }
                            "split_seed" => {
                                m.split_seed = Some(v.parse().map_err(|_| bad(format!("bad split_seed `{v}`")))?);
                            }
                            other => return Err(bad(format!("unknown key `{other}`"))),
                        }
                        continue;
                    }
                    match section {
                        Some(Split::Train) => m.train.push(line.to_string()),
                        Some(Split::Test) => m.test.push(line.to_string()),
                        None => return Err(bad(format!("scene `{line}` outside a section"))),
                    }
                }
            }
        }
        if let Some(s) = m.train.iter().find(|s| m.test.contains(s)) {
            return Err(CrossNetError::Manifest(format!("scene `{s}` is in both splits")));
        }
        Ok(m)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(g) = self.grid {
            out.push_str(&format!("grid = {g}x{g}\n"));
        }
        if let Some((h, w)) = self.crop {
            out.push_str(&format!("crop = {h}x{w}\n"));
        }
        if let Some(s) = self.split_seed {
            out.push_str(&format!("split_seed = {s}\n"));
        }
        out.push_str("[train]\n");
        for s in &self.train {
            out.push_str(s);
            out.push('\n');
        }
        out.push_str("[test]\n");
        for s in &self.test {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn grid_size(&self) -> usize {
        self.grid.unwrap_or(DEFAULT_GRID)
    }

    pub fn scenes(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn split_of(&self, scene: &str) -> Option<Split> {
        if self.train.iter().any(|s| s == scene) {
            Some(Split::Train)
        } else if self.test.iter().any(|s| s == scene) {
            Some(Split::Test)
        } else {
            None
        }
    }

    /// Seeded random split of `scenes` with `n_test` held out.
    pub fn random_split(mut scenes: Vec<String>, n_test: usize, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        scenes.sort();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        scenes.shuffle(&mut rng);
        let n_test = n_test.min(scenes.len());
        let test = scenes.split_off(scenes.len() - n_test);
        Self {
            train: scenes,
            test,
            split_seed: Some(seed),
            ..Self::default()
        }
    }
}

/// Crop applied to a view of size `(h, w)`.
pub fn crop_size_for(h: usize, w: usize, declared: Option<(usize, usize)>) -> Result<(usize, usize)> {
    let (ch, cw) = match declared {
        Some(c) => c,
        None if (h, w) == LYTRO_SOURCE => LYTRO_CROP,
        None => (h / SIZE_MULTIPLE * SIZE_MULTIPLE, w / SIZE_MULTIPLE * SIZE_MULTIPLE),
    };
    if ch == 0 || cw == 0 || ch > h || cw > w {
        return domain_err!("cannot crop {}x{} views to {}x{}", h, w, ch, cw);
    }
    Ok((ch, cw))
}

pub fn center_crop(img: &Image, h: usize, w: usize) -> Image {
    let (ih, iw) = img.size();
    img.crop((ih - h) / 2, (iw - w) / 2, h, w)
}

pub fn view_path(scene_dir: &Path, (r, c): Pos) -> PathBuf {
    scene_dir.join(format!("view_{r}_{c}.png"))
}

/// Extent of the `view_<r>_<c>.png` lattice present in `scene_dir`.
fn scan_grid(scene_dir: &Path) -> Result<(usize, usize)> {
    let mut extent = (0, 0);
    for entry in std::fs::read_dir(scene_dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        let Some(rest) = name.strip_prefix("view_").and_then(|s| s.strip_suffix(".png")) else {
            continue;
        };
        if let Some((r, c)) = rest.split_once('_') {
            if let (Ok(r), Ok(c)) = (r.parse::<usize>(), c.parse::<usize>()) {
                extent = (extent.0.max(r + 1), extent.1.max(c + 1));
            }
        }
    }
    Ok(extent)
}

/// Loads a `grid × grid` scene from `scene_dir` and center-crops every view.
pub fn load_scene_dir(scene_dir: &Path, scene_id: &str, grid: usize, crop: Option<(usize, usize)>) -> Result<LightField> {
    if !scene_dir.is_dir() {
        return Err(CrossNetError::Manifest(format!("scene directory {} not found", scene_dir.display())));
    }
    let extent = scan_grid(scene_dir)?;
    if extent.0 < grid || extent.1 < grid {
        return domain_err!(
            "scene `{}` holds a {}x{} angular grid, expected {}x{}",
            scene_id,
            extent.0,
            extent.1,
            grid,
            grid
        );
    }
    let mut views = Vec::with_capacity(grid * grid);
    let mut target = None;
    for r in 0..grid {
        for c in 0..grid {
            let path = view_path(scene_dir, (r, c));
            if !path.is_file() {
                return Err(CrossNetError::MissingView {
                    scene: scene_id.to_string(),
                    row: r,
                    col: c,
                    path,
                });
            }
            let img = load_png(&path)?;
            let (ch, cw) = match target {
                Some(t) => t,
                None => *target.insert(crop_size_for(img.height(), img.width(), crop)?),
            };
            if img.height() < ch || img.width() < cw {
                return domain_err!("view ({}, {}) of `{}` is smaller than the crop", r, c, scene_id);
            }
            views.push(center_crop(&img, ch, cw));
        }
    }
    LightField::new(scene_id, grid, views)
}

/// A dataset root with its manifest. Every scene load is recorded so callers
/// can audit which splits were read.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
    log: Arc<Mutex<Vec<(Split, String)>>>,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CrossNetError::Manifest(format!("cannot read {}: {e}", path.display())))?;
        Ok(Self {
            manifest: Manifest::parse(&text)?,
            root,
            log: Arc::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn load(&self, split: Split, scene: &str) -> Result<LightField> {
        if !self.manifest.scenes(split).iter().any(|s| s == scene) {
            return Err(CrossNetError::Manifest(format!("scene `{scene}` is not listed under [{split}]")));
        }
        self.log.lock().expect("access log poisoned").push((split, scene.to_string()));
        load_scene_dir(
            &self.root.join(split.dir_name()).join(scene),
            scene,
            self.manifest.grid_size(),
            self.manifest.crop,
        )
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<LightField>> {
        self.manifest.scenes(split).iter().map(|s| self.load(split, s)).collect()
    }

    /// Every `(split, scene)` loaded so far, in order.
    pub fn access_log(&self) -> Vec<(Split, String)> {
        self.log.lock().expect("access log poisoned").clone()
    }
}

/// Loads `scene_id` from whichever split of `root`'s manifest lists it.
pub fn load_lightfield(root: impl AsRef<Path>, scene_id: &str) -> Result<LightField> {
    let ds = Dataset::open(root.as_ref())?;
    let Some(split) = ds.manifest().split_of(scene_id) else {
        return Err(CrossNetError::Manifest(format!("scene `{scene_id}` is not in the manifest")));
    };
    ds.load(split, scene_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn field(grid: usize, size: usize) -> LightField {
        let views = (0..grid * grid)
            .map(|k| Image::from_fn(3, size, size, |c, y, x| ((k + c + y * 3 + x) % 17) as f32 / 17.0))
            .collect();
        LightField::new("s", grid, views).unwrap()
    }

    #[test]
    fn manifest_round_trip() {
        let text = "# flowers\ngrid = 8x8\ncrop = 320x512\nsplit_seed = 4\n[train]\na\nb # note\n[test]\nc\n";
        let m = Manifest::parse(text).unwrap();
        assert_eq!(m.train, ["a", "b"]);
        assert_eq!(m.test, ["c"]);
        assert_eq!(m.crop, Some((320, 512)));
        assert_eq!(Manifest::parse(&m.render()).unwrap(), m);
    }

    #[test]
    fn manifest_errors() {
        assert!(Manifest::parse("a\n").is_err());
        assert!(Manifest::parse("[train]\na\n[test]\na\n").is_err());
        assert!(Manifest::parse("grid = 3x4\n").is_err());
        assert!(Manifest::parse("crop = 100x100\n").is_err());
        assert!(Manifest::parse("[valid]\n").is_err());
    }

    #[test]
    fn crop_rules() {
        assert_eq!(crop_size_for(376, 541, None).unwrap(), (320, 512));
        assert_eq!(crop_size_for(100, 70, None).unwrap(), (96, 64));
        assert_eq!(crop_size_for(400, 600, Some((320, 512))).unwrap(), (320, 512));
        assert!(crop_size_for(20, 20, None).is_err());
    }

    #[test]
    fn protocol_pairs() {
        let lf = field(8, 16);
        let pairs = test_pairs(&lf, 4).unwrap();
        assert_eq!(pairs.len(), 7);
        for (k, p) in pairs.iter().enumerate() {
            assert_eq!(p.lr_pos, (k + 1, k + 1));
            assert_eq!(p.ref_pos, (0, 0));
            assert_eq!(p.reference, pairs[0].reference);
            assert_eq!(p.lr.size(), (4, 4));
        }
        let col = pairs_for(&lf, 4, Protocol::Column).unwrap();
        assert_eq!(col[2].lr_pos, (3, 0));
    }

    #[test]
    fn crop_keeps_ratio() {
        let lf = field(2, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = sample_training_pair(&lf, 8, &mut rng).unwrap();
        let c = random_crop(&p, 16, &mut rng).unwrap();
        c.check().unwrap();
        assert_eq!(c.hr.size(), (16, 16));
        assert!(random_crop(&p, 12, &mut rng).is_err());
    }

    #[test]
    fn zero_offset_is_identity() {
        let lf = field(2, 16);
        let p = make_pair(&lf, (0, 1), (1, 0), 4).unwrap();
        assert_eq!(shift_reference(&p, 0, 0), p);
        let s = shift_reference(&p, 15, 0);
        for y in 0..16 {
            assert_eq!(s.reference.at(0, y, 0), p.reference.at(0, y, 15));
            for x in 1..16 {
                assert_eq!(s.reference.at(0, y, x), p.reference.at(0, y, 15));
            }
        }
        assert_eq!(s.hr, p.hr);
    }

    #[test]
    fn split_is_seeded() {
        let scenes: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let a = Manifest::random_split(scenes.clone(), 3, 9);
        assert_eq!(a, Manifest::random_split(scenes, 3, 9));
        assert_eq!(a.test.len(), 3);
        assert_eq!(a.train.len(), 7);
    }
}
