//! Synthetic light fields with known disparity.
//!
//! Every view is a window of one larger textured plane: view `(r, c)` at pixel
//! `(y, x)` equals `base(y + r·d, x + c·d)`. The true backward flow from the
//! view at `lr` to the view at `ref` is therefore the constant
//! `((c_lr − c_ref)·d, (r_lr − r_ref)·d)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain_err, Result};
use crate::imaging::{resize_to, Image};
use crate::io::{quantize, save_png};
use crate::lightfield::{view_path, LightField, Manifest, Pos, Split, MANIFEST_FILE};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub grid: usize,
    /// Disparity in pixels per angular step.
    pub disparity: usize,
    pub seed: u64,
}

impl SceneSpec {
    /// Backward flow `(u, v)` that warps the `ref_pos` view onto the `lr_pos` view.
    pub fn true_flow(&self, lr_pos: Pos, ref_pos: Pos) -> (f32, f32) {
        let d = self.disparity as f32;
        (
            (lr_pos.1 as f32 - ref_pos.1 as f32) * d,
            (lr_pos.0 as f32 - ref_pos.0 as f32) * d,
        )
    }
}

/// Random texture: a sum of bicubically upsampled random grids at several
/// octaves, normalised to `[0.05, 0.95]` and quantised to 8 bits.
pub fn texture(h: usize, w: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Tensor::zeros(&[3, h, w]);
    let mut amp = 1.0f32;
    for cell in [16usize, 8, 4, 2] {
        let gh = h.div_ceil(cell) + 1;
        let gw = w.div_ceil(cell) + 1;
        let grid = Tensor::from_chw(3, gh, gw, |_, _, _| rng.random_range(-1.0f32..1.0));
        let up = resize_to(&grid, gh * cell, gw * cell)?.crop(0, 0, h, w);
        for (a, b) in acc.data_mut().iter_mut().zip(up.data()) {
            *a += amp * b;
        }
        amp *= 0.6;
    }
    let (lo, hi) = acc.min_max();
    let span = (hi - lo).max(1e-6);
    let img = Image::new(acc.map(|v| 0.05 + 0.9 * (v - lo) / span))?;
    Ok(quantize(&img))
}

pub fn generate_scene(id: &str, spec: &SceneSpec) -> Result<LightField> {
    if spec.grid == 0 || spec.height == 0 || spec.width == 0 {
        return domain_err!("degenerate synthetic scene {:?}", spec);
    }
    let margin = (spec.grid - 1) * spec.disparity;
    let base = texture(spec.height + margin, spec.width + margin, spec.seed)?;
    let mut views = Vec::with_capacity(spec.grid * spec.grid);
    for r in 0..spec.grid {
        for c in 0..spec.grid {
            views.push(base.crop(r * spec.disparity, c * spec.disparity, spec.height, spec.width));
        }
    }
    LightField::new(id, spec.grid, views)
}

pub fn write_scene(dir: &Path, lf: &LightField) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in 0..lf.grid() {
        for c in 0..lf.grid() {
            save_png(view_path(dir, (r, c)), lf.view((r, c)))?;
        }
    }
    Ok(())
}

/// Writes a dataset root: each scene under its split plus `manifest.txt`.
/// Scene seeds are `seed + index` in manifest order (train first).
pub fn write_dataset(root: &Path, spec: &SceneSpec, train: &[&str], test: &[&str]) -> Result<Manifest> {
    let manifest = Manifest {
        train: train.iter().map(|s| s.to_string()).collect(),
        test: test.iter().map(|s| s.to_string()).collect(),
        grid: Some(spec.grid),
        crop: None,
        split_seed: None,
    };
    let scenes = train
        .iter()
        .map(|s| (Split::Train, *s))
        .chain(test.iter().map(|s| (Split::Test, *s)));
    for (k, (split, id)) in scenes.enumerate() {
        let scene_spec = SceneSpec {
            seed: spec.seed + k as u64,
            ..spec.clone()
        };
        let lf = generate_scene(id, &scene_spec)?;
        write_scene(&root.join(split.dir_name()).join(id), &lf)?;
    }
    std::fs::create_dir_all(root)?;
    std::fs::write(root.join(MANIFEST_FILE), manifest.render())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{warp, FlowField};
    use crate::lightfield::Dataset;

    fn spec() -> SceneSpec {
        SceneSpec {
            height: 32,
            width: 32,
            grid: 3,
            disparity: 2,
            seed: 5,
        }
    }

    #[test]
    fn texture_is_deterministic_and_in_range() {
        let a = texture(20, 30, 1).unwrap();
        assert_eq!(a, texture(20, 30, 1).unwrap());
        assert_ne!(a, texture(20, 30, 2).unwrap());
        let (lo, hi) = a.tensor().min_max();
        assert!(lo >= 0.0 && hi <= 1.0 && hi - lo > 0.5);
    }

    #[test]
    fn true_flow_aligns_views() {
        let s = spec();
        let lf = generate_scene("x", &s).unwrap();
        let (lr, rf) = ((2, 1), (0, 2));
        let (u, v) = s.true_flow(lr, rf);
        assert_eq!((u, v), (-2.0, 4.0));
        let warped = warp(lf.view(rf), &FlowField::constant(32, 32, u, v, 0)).unwrap();
        let m = 4;
        for c in 0..3 {
            for y in 0..32 - m {
                for x in m..32 - m {
                    assert_eq!(warped.at(c, y, x), lf.view(lr).at(c, y, x));
                }
            }
        }
    }

    #[test]
    fn written_dataset_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &spec(), &["a"], &["b"]).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        let lf = ds.load(Split::Test, "b").unwrap();
        assert_eq!(lf.grid(), 3);
        assert_eq!(lf.size(), (32, 32));
        let direct = generate_scene(
            "b",
            &SceneSpec {
                seed: 6,
                ..spec()
            },
        )
        .unwrap();
        assert_eq!(lf, direct);
        assert_eq!(ds.access_log(), vec![(Split::Test, "b".to_string())]);
    }
}
