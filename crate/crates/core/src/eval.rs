//! Evaluation sweeps over angular positions.

use crate::encoder::{sisr_upsample, BicubicSisr};
use crate::error::{domain_err, Result};
use crate::imaging::Image;
use crate::lightfield::{pairs_for, LightField, Pos, Protocol, SamplePair};
use crate::model::{forward_upsampled, CrossNetConfig};
use crate::objectives::{psnr, ssim, PSNR_CAP_DB};
use crate::params::ParameterStore;
use crate::tiling::{sliding_window_upsampled, TileSpec};

/// Scene name used for aggregate rows.
pub const MEAN_SCENE: &str = "mean";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub scene: String,
    /// `None` on the overall mean row.
    pub lr_pos: Option<Pos>,
    pub ref_pos: Pos,
    pub scale: usize,
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricRow {
    pub fn is_mean(&self) -> bool {
        self.scene == MEAN_SCENE
    }
}

/// Per-pair metrics of one method on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTable {
    pub method: String,
    pub dataset: String,
    pub scale: usize,
    pub rows: Vec<MetricRow>,
}

pub fn pos_label(p: Option<Pos>) -> String {
    match p {
        Some((r, c)) => format!("{r}_{c}"),
        None => "all".to_string(),
    }
}

fn mean(rows: &[&MetricRow]) -> (f64, f64) {
    let n = rows.len() as f64;
    (
        rows.iter().map(|r| r.psnr).sum::<f64>() / n,
        rows.iter().map(|r| r.ssim).sum::<f64>() / n,
    )
}

impl MetricTable {
    /// Distinct LR positions in first-seen order.
    pub fn positions(&self) -> Vec<Pos> {
        let mut out: Vec<Pos> = Vec::new();
        for p in self.rows.iter().filter_map(|r| r.lr_pos) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    pub fn scene_count(&self) -> usize {
        let mut s: Vec<&str> = self.rows.iter().map(|r| r.scene.as_str()).collect();
        s.sort();
        s.dedup();
        s.len()
    }

    /// Mean PSNR and SSIM at `pos` over scenes.
    pub fn position_mean(&self, pos: Pos) -> Option<(f64, f64)> {
        let rows: Vec<&MetricRow> = self.rows.iter().filter(|r| r.lr_pos == Some(pos)).collect();
        (!rows.is_empty()).then(|| mean(&rows))
    }

    /// Aggregate rows: one per position when there is more than one scene,
    /// then the overall mean.
    pub fn mean_rows(&self) -> Vec<MetricRow> {
        if self.rows.is_empty() {
            return Vec::new();
        }
        let ref_pos = self.rows[0].ref_pos;
        let mut out = Vec::new();
        if self.scene_count() > 1 {
            for p in self.positions() {
                let (psnr, ssim) = self.position_mean(p).expect("position present");
                let ref_pos = self.rows.iter().find(|r| r.lr_pos == Some(p)).map_or(ref_pos, |r| r.ref_pos);
                out.push(MetricRow {
                    scene: MEAN_SCENE.to_string(),
                    lr_pos: Some(p),
                    ref_pos,
                    scale: self.scale,
                    psnr,
                    ssim,
                });
            }
        }
        let (psnr, ssim) = mean(&self.rows.iter().collect::<Vec<_>>());
        out.push(MetricRow {
            scene: MEAN_SCENE.to_string(),
            lr_pos: None,
            ref_pos,
            scale: self.scale,
            psnr,
            ssim,
        });
        out
    }

    /// Per-pair rows followed by [`MetricTable::mean_rows`].
    pub fn rows_with_means(&self) -> Vec<MetricRow> {
        let mut out = self.rows.clone();
        out.extend(self.mean_rows());
        out
    }
}

fn row(pair: &SamplePair, scene: &str, pred: &Image) -> Result<MetricRow> {
    Ok(MetricRow {
        scene: scene.to_string(),
        lr_pos: Some(pair.lr_pos),
        ref_pos: pair.ref_pos,
        scale: pair.scale,
        psnr: psnr(pred, &pair.hr, 1.0)?.min(PSNR_CAP_DB),
        ssim: ssim(pred, &pair.hr)?,
    })
}

/// Runs every protocol pair of every scene through the network.
/// With `tiles`, inputs larger than one window are processed tile by tile.
pub fn evaluate(
    params: &ParameterStore,
    cfg: &CrossNetConfig,
    fields: &[LightField],
    protocol: Protocol,
    tiles: Option<&TileSpec>,
) -> Result<MetricTable> {
    cfg.validate()?;
    cfg.check_params(params)?;
    evaluate_with(fields, cfg.scale_factor, protocol, "crossnet", |pair| {
        let lr_up = sisr_upsample(&pair.lr, cfg.scale_factor, cfg.sisr.upsampler().as_ref(), Some(&pair.id))?;
        match tiles {
            Some(spec) => sliding_window_upsampled(&lr_up, &pair.reference, params, cfg, spec),
            None => Ok(forward_upsampled(&lr_up, &pair.reference, params, cfg, cfg.variant)?.0),
        }
    })
    .map(|mut t| {
        t.method = cfg.variant.name().to_string();
        t
    })
}

/// The bicubic-upsampling baseline on the same pairs.
pub fn evaluate_bicubic(fields: &[LightField], scale: usize, protocol: Protocol) -> Result<MetricTable> {
    evaluate_with(fields, scale, protocol, "bicubic", |pair| {
        sisr_upsample(&pair.lr, scale, &BicubicSisr, None)
    })
}

/// Evaluates an arbitrary predictor over the protocol pairs.
pub fn evaluate_with(
    fields: &[LightField],
    scale: usize,
    protocol: Protocol,
    method: &str,
    mut predict: impl FnMut(&SamplePair) -> Result<Image>,
) -> Result<MetricTable> {
    if fields.is_empty() {
        return domain_err!("nothing to evaluate");
    }
    let mut rows = Vec::new();
    for lf in fields {
        for pair in pairs_for(lf, scale, protocol)? {
            let pred = predict(&pair)?;
            rows.push(row(&pair, lf.scene_id(), &pred)?);
        }
    }
    Ok(MetricTable {
        method: method.to_string(),
        dataset: String::new(),
        scale,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(id: &str, k: usize) -> LightField {
        let views = (0..64)
            .map(|v| Image::from_fn(3, 16, 16, |c, y, x| ((v + c + y * k + x) % 9) as f32 / 9.0))
            .collect();
        LightField::new(id, 8, views).unwrap()
    }

    #[test]
    fn protocol_table_shape() {
        let one = evaluate_bicubic(&[field("a", 3)], 4, Protocol::Diagonal).unwrap();
        assert_eq!(one.rows.len(), 7);
        assert_eq!(one.mean_rows().len(), 1);
        let two = evaluate_bicubic(&[field("a", 3), field("b", 5)], 4, Protocol::Diagonal).unwrap();
        assert_eq!(two.rows.len(), 14);
        let all = two.rows_with_means();
        assert_eq!(all.len(), 14 + 7 + 1);
        let overall = all.last().unwrap();
        let m = two.rows.iter().map(|r| r.psnr).sum::<f64>() / 14.0;
        assert!((overall.psnr - m).abs() < 1e-12);
        assert_eq!(overall.lr_pos, None);
    }

    #[test]
    fn identity_predictor_hits_the_cap() {
        let t = evaluate_with(&[field("a", 3)], 4, Protocol::Diagonal, "oracle", |p| Ok(p.hr.clone())).unwrap();
        assert!(t.rows.iter().all(|r| r.psnr == PSNR_CAP_DB && (r.ssim - 1.0).abs() < 1e-9));
    }
}
