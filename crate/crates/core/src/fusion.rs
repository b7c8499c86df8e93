//! Per-pixel naive-Bayes fusion of the conflict, point-label and texture
//! maps, and extraction of facade element instances from the posterior.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::FacadeClass;
use crate::geom::Rect2;
use crate::maps::{Channel, ProbabilityMap};

/// Likelihood floor for the point-label and texture sources.
pub const EPSILON: f64 = 1e-3;

/// Classes of the posterior, in channel order. `Wall` is the background.
pub const POSTERIOR_CLASSES: [FacadeClass; 12] = [
    FacadeClass::Window,
    FacadeClass::Door,
    FacadeClass::Underpass,
    FacadeClass::Balcony,
    FacadeClass::Molding,
    FacadeClass::Deco,
    FacadeClass::Column,
    FacadeClass::Arch,
    FacadeClass::Drainpipe,
    FacadeClass::Stairs,
    FacadeClass::Blinds,
    FacadeClass::Wall,
];

pub const WALL: usize = 11;

/// Same layout as [`ProbabilityMap`], with one channel per
/// [`POSTERIOR_CLASSES`] entry.
pub type PosteriorMap = ProbabilityMap;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("maps do not share frame and resolution")]
    FrameMismatch,
    #[error("conflict map has no conflict channel")]
    MissingConflictChannel,
    #[error("invalid priors: {0}")]
    InvalidPriors(String),
}

/// Class priors over [`POSTERIOR_CLASSES`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors(pub [f64; 12]);

impl Default for Priors {
    fn default() -> Self {
        Priors::uniform()
    }
}

impl Priors {
    pub fn uniform() -> Self {
        Priors([1.0 / 12.0; 12])
    }

    /// Validated priors: non-negative, summing to 1 within 1e-9. Classes
    /// missing from `map` get 0.
    pub fn from_map(map: &BTreeMap<FacadeClass, f64>) -> Result<Self, FusionError> {
        let mut p = [0.0; 12];
        for (c, v) in map {
            let k = posterior_index(*c).ok_or_else(|| {
                FusionError::InvalidPriors(format!("{c} is not a posterior class"))
            })?;
            p[k] = *v;
        }
        Self::new(p)
    }

    pub fn new(p: [f64; 12]) -> Result<Self, FusionError> {
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(FusionError::InvalidPriors("negative or non-finite value".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(FusionError::InvalidPriors(format!("sum is {s}, expected 1")));
        }
        Ok(Priors(p))
    }

    pub fn get(&self, c: FacadeClass) -> f64 {
        posterior_index(c).map_or(0.0, |k| self.0[k])
    }
}

pub fn posterior_index(c: FacadeClass) -> Option<usize> {
    POSTERIOR_CLASSES.iter().position(|x| *x == c)
}

/// Conflict likelihood of a class: `p` for openings, `1 − p` otherwise.
pub fn conflict_likelihood(c: FacadeClass, p_conflict: f64) -> f64 {
    if c.is_opening() {
        p_conflict
    } else {
        1.0 - p_conflict
    }
}

/// Source likelihood clamped to `[EPSILON, 1]`.
pub fn floored(x: f64) -> f64 {
    if x.is_nan() {
        EPSILON
    } else {
        x.clamp(EPSILON, 1.0)
    }
}

/// Posterior of one pixel. `pc` and `tex` hold the source channel values in
/// [`POSTERIOR_CLASSES`] order.
pub fn fuse_pixel(p_conflict: f64, pc: &[f64; 12], tex: Option<&[f64; 12]>, priors: &Priors) -> [f64; 12] {
    let mut lik = [0.0; 12];
    for (k, c) in POSTERIOR_CLASSES.iter().enumerate() {
        let source = floored(pc[k]) * tex.map_or(1.0, |t| floored(t[k]));
        lik[k] = conflict_likelihood(*c, p_conflict) * source;
    }
    // A flat likelihood carries no information.
    if lik.iter().all(|l| *l == lik[0]) && lik[0] > 0.0 {
        return priors.0;
    }
    let mut post = [0.0; 12];
    let mut sum = 0.0;
    for k in 0..12 {
        post[k] = priors.0[k] * lik[k];
        sum += post[k];
    }
    if !(sum > 0.0 && sum.is_finite()) {
        return priors.0;
    }
    for x in &mut post {
        *x /= sum;
    }
    post
}

fn gather(map: &ProbabilityMap, idx: &[Option<usize>; 12], o: usize) -> [f64; 12] {
    let mut out = [0.0; 12];
    for k in 0..12 {
        out[k] = idx[k].map_or(0.0, |c| map.values[o + c]);
    }
    out
}

fn class_indices(map: &ProbabilityMap) -> [Option<usize>; 12] {
    let mut idx = [None; 12];
    for (k, c) in POSTERIOR_CLASSES.iter().enumerate() {
        idx[k] = map.channel_index(Channel::Class(*c));
    }
    idx
}

/// Naive-Bayes combination of the three evidence maps.
pub fn fuse(
    conflict: &ProbabilityMap,
    pc: &ProbabilityMap,
    tex: Option<&ProbabilityMap>,
    priors: &Priors,
) -> Result<PosteriorMap, FusionError> {
    if !conflict.same_layout(pc) || tex.is_some_and(|t| !conflict.same_layout(t)) {
        return Err(FusionError::FrameMismatch);
    }
    let cch = conflict
        .channel_index(Channel::Conflict)
        .ok_or(FusionError::MissingConflictChannel)?;
    let pc_idx = class_indices(pc);
    let tex_idx = tex.map(class_indices);
    let channels = POSTERIOR_CLASSES.iter().map(|c| Channel::Class(*c)).collect();
    let mut out = ProbabilityMap {
        frame: conflict.frame,
        resolution: conflict.resolution,
        width: conflict.width,
        height: conflict.height,
        channels,
        values: vec![0.0; conflict.pixel_count() * 12],
    };
    let w = out.width;
    out.values
        .par_chunks_mut(w * 12)
        .enumerate()
        .for_each(|(j, row)| {
            for i in 0..w {
                let p = conflict.values[conflict.offset(i, j) + cch];
                let lpc = gather(pc, &pc_idx, pc.offset(i, j));
                let ltex = tex.zip(tex_idx.as_ref()).map(|(t, idx)| gather(t, idx, t.offset(i, j)));
                let post = fuse_pixel(p, &lpc, ltex.as_ref(), priors);
                row[i * 12..(i + 1) * 12].copy_from_slice(&post);
            }
        });
    Ok(out)
}

/// Detected facade element on one wall.
#[derive(Debug, Clone, PartialEq)]
pub struct OpeningInstance {
    pub class: FacadeClass,
    pub rect: Rect2,
    pub confidence: f64,
    pub pixel_count: usize,
    pub wall_id: String,
}

/// Relabels tall ground-level doors and windows as underpasses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnderpassRule {
    pub min_height: f64,
    /// Allowed gap to the bottom wall edge, in pixels.
    pub bottom_tolerance_px: f64,
    pub min_underpass_posterior: f64,
}

impl Default for UnderpassRule {
    fn default() -> Self {
        UnderpassRule {
            min_height: 2.5,
            bottom_tolerance_px: 2.0,
            min_underpass_posterior: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub threshold: f64,
    pub min_area: f64,
    pub wall_id: String,
    pub underpass_rule: Option<UnderpassRule>,
}

/// Per-pixel winning class index into [`POSTERIOR_CLASSES`]; ties go to
/// `Wall`, then to the earlier class.
pub fn argmax_class(px: &[f64]) -> usize {
    let mut best = WALL;
    for k in 0..12 {
        if px[k] > px[best] {
            best = k;
        }
    }
    best
}

/// Components of non-wall winners at or above `threshold`, without any
/// relabeling.
pub fn extract_instances(post: &PosteriorMap, threshold: f64, min_area: f64, wall_id: &str) -> Vec<OpeningInstance> {
    extract_instances_with(
        post,
        &ExtractOptions {
            threshold,
            min_area,
            wall_id: wall_id.to_string(),
            underpass_rule: None,
        },
    )
}

pub fn extract_instances_with(post: &PosteriorMap, opts: &ExtractOptions) -> Vec<OpeningInstance> {
    let (w, h) = (post.width, post.height);
    let label: Vec<Option<usize>> = (0..w * h)
        .map(|k| {
            let px = &post.values[k * 12..(k + 1) * 12];
            let c = argmax_class(px);
            (c != WALL && px[c] >= opts.threshold).then_some(c)
        })
        .collect();
    let res = post.resolution;
    let min_pixels = opts.min_area / (res * res) * (1.0 - 1e-9);
    let underpass = posterior_index(FacadeClass::Underpass).unwrap_or(2);

    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        let Some(cls) = label[start] else { continue };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut i_lo, mut i_hi, mut j_lo, mut j_hi) = (usize::MAX, 0, usize::MAX, 0);
        let (mut n, mut sum, mut under_sum) = (0usize, 0.0, 0.0);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % w, k / w);
            i_lo = i_lo.min(i);
            i_hi = i_hi.max(i);
            j_lo = j_lo.min(j);
            j_hi = j_hi.max(j);
            n += 1;
            sum += post.values[k * 12 + cls];
            under_sum += post.values[k * 12 + underpass];
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= w as i64 || nj >= h as i64 {
                        continue;
                    }
                    let nk = nj as usize * w + ni as usize;
                    if !seen[nk] && label[nk] == Some(cls) {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                }
            }
        }
        if (n as f64) < min_pixels {
            continue;
        }
        let rect = Rect2 {
            u_min: i_lo as f64 * res,
            v_min: j_lo as f64 * res,
            u_max: ((i_hi + 1) as f64 * res).min(post.frame.u_extent),
            v_max: ((j_hi + 1) as f64 * res).min(post.frame.v_extent),
        };
        let mut class = POSTERIOR_CLASSES[cls];
        let mut confidence = sum / n as f64;
        if let Some(rule) = opts.underpass_rule {
            let mean_under = under_sum / n as f64;
            if matches!(class, FacadeClass::Door | FacadeClass::Window)
                && rect.height() >= rule.min_height
                && rect.v_min <= rule.bottom_tolerance_px * res + 1e-9
                && mean_under >= rule.min_underpass_posterior
            {
                class = FacadeClass::Underpass;
                confidence = confidence.max(mean_under);
            }
        }
        out.push(OpeningInstance {
            class,
            rect,
            confidence: confidence.clamp(0.0, 1.0),
            pixel_count: n,
            wall_id: opts.wall_id.clone(),
        });
    }
    sort_instances(&mut out);
    out
}

pub fn sort_instances(v: &mut [OpeningInstance]) {
    v.sort_by(|a, b| {
        a.class
            .cmp(&b.class)
            .then(a.rect.u_min.total_cmp(&b.rect.u_min))
            .then(a.rect.v_min.total_cmp(&b.rect.v_min))
    });
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceRecord {
    class: FacadeClass,
    u_min: f64,
    v_min: f64,
    u_max: f64,
    v_max: f64,
    confidence: f64,
    wall_id: String,
    #[serde(default)]
    pixel_count: usize,
}

pub fn instances_to_json(v: &[OpeningInstance]) -> String {
    let recs: Vec<_> = v
        .iter()
        .map(|i| InstanceRecord {
            class: i.class,
            u_min: i.rect.u_min,
            v_min: i.rect.v_min,
            u_max: i.rect.u_max,
            v_max: i.rect.v_max,
            confidence: i.confidence,
            wall_id: i.wall_id.clone(),
            pixel_count: i.pixel_count,
        })
        .collect();
    serde_json::to_string_pretty(&recs).expect("instance serialization is infallible")
}

pub fn instances_from_json(s: &str) -> Result<Vec<OpeningInstance>, String> {
    let recs: Vec<InstanceRecord> = serde_json::from_str(s).map_err(|e| e.to_string())?;
    recs.into_iter()
        .map(|r| {
            let rect = Rect2::new(r.u_min, r.v_min, r.u_max, r.v_max).map_err(|e| e.to_string())?;
            if !(0.0..=1.0).contains(&r.confidence) {
                return Err(format!("confidence {} outside [0, 1]", r.confidence));
            }
            Ok(OpeningInstance {
                class: r.class,
                rect,
                confidence: r.confidence,
                pixel_count: r.pixel_count,
                wall_id: r.wall_id,
            })
        })
        .collect()
}
