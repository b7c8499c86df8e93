//! End-to-end refinement: visibility analysis, probability maps, fusion,
//! reconstruction and embedding for every wall of a model.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{FacadeClass, LabeledPointCloud, UncertaintyParams};
use crate::embed::{self, EmbedError};
use crate::fusion::{self, ExtractOptions, FusionError, OpeningInstance, PosteriorMap, Priors, UnderpassRule};
use crate::geom::{wall_frame_from_polygon, GeomError, Polygon2, Rect2, WallFrame};
use crate::maps::{self, MapError, ProbabilityMap, TextureRaster};
use crate::model::{validate_model, BuildingModel, SurfaceKind, ValidationReport};
use crate::reconstruct::{self, CutRecord, Library, SkippedInstance};
use crate::visibility::{self, StateGrid, VisibilityError, WallPlane};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Visibility(#[from] VisibilityError),
    #[error("wall {wall_id}: {source}")]
    Map {
        wall_id: String,
        #[source]
        source: MapError,
    },
    #[error("wall {wall_id}: {source}")]
    Fusion {
        wall_id: String,
        #[source]
        source: FusionError,
    },
    #[error("wall {wall_id}: {source}")]
    Geometry {
        wall_id: String,
        #[source]
        source: GeomError,
    },
    #[error("texture given for unknown wall {0}")]
    UnknownTextureWall(String),
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
}

/// Numeric parameters and switches of a refinement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub voxel_size: f64,
    pub padding: f64,
    pub resolution: f64,
    pub sigma_model: f64,
    pub sigma_point: f64,
    pub mu_model: f64,
    pub mu_point: f64,
    /// Largest distance from the wall plane for a point to vote.
    pub max_offset: f64,
    pub threshold: f64,
    pub min_area: f64,
    /// Recess depth of windows, doors and underpasses.
    pub opening_depth: f64,
    /// Protrusion of installations.
    pub installation_depth: f64,
    /// Minimum strip of wall kept between a cut and the wall's bounding
    /// rectangle.
    pub cut_margin: f64,
    pub underpass_rule: bool,
    /// Class priors; uniform over the posterior classes when absent.
    pub priors: Option<BTreeMap<FacadeClass, f64>>,
    pub jobs: usize,
    pub export_maps: bool,
    pub export_voxels: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            voxel_size: 0.1,
            padding: 0.5,
            resolution: 0.05,
            sigma_model: 0.3,
            sigma_point: 0.05,
            mu_model: 0.0,
            mu_point: 0.0,
            max_offset: 0.3,
            threshold: 0.5,
            min_area: 0.1,
            opening_depth: 0.15,
            installation_depth: 0.3,
            cut_margin: 0.02,
            underpass_rule: true,
            priors: None,
            jobs: 1,
            export_maps: false,
            export_voxels: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive = [
            ("voxel_size", self.voxel_size),
            ("resolution", self.resolution),
            ("sigma_model", self.sigma_model),
            ("sigma_point", self.sigma_point),
            ("max_offset", self.max_offset),
            ("min_area", self.min_area),
            ("opening_depth", self.opening_depth),
            ("installation_depth", self.installation_depth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PipelineError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("padding", self.padding), ("cut_margin", self.cut_margin)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PipelineError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(PipelineError::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.jobs == 0 {
            return Err(PipelineError::Config("jobs must be at least 1".into()));
        }
        self.priors()?;
        Ok(())
    }

    pub fn uncertainty(&self) -> UncertaintyParams {
        UncertaintyParams {
            sigma_model: self.sigma_model,
            sigma_point: self.sigma_point,
            mu_model: self.mu_model,
            mu_point: self.mu_point,
        }
    }

    pub fn priors(&self) -> Result<Priors, PipelineError> {
        match &self.priors {
            None => Ok(Priors::uniform()),
            Some(m) => Priors::from_map(m).map_err(|e| PipelineError::Config(e.to_string())),
        }
    }
}

/// The four rasters of one wall.
#[derive(Debug, Clone, PartialEq)]
pub struct WallMaps {
    pub wall_id: String,
    pub frame: WallFrame,
    pub outline: Polygon2,
    pub conflict: ProbabilityMap,
    /// False when no voxel of this wall was observed and the conflict map is
    /// the uninformative 0.5 fill.
    pub conflict_observed: bool,
    pub point_labels: ProbabilityMap,
    pub texture: Option<ProbabilityMap>,
    pub posterior: PosteriorMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapsOutput {
    pub states: StateGrid,
    pub walls: Vec<WallMaps>,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))
}

/// Visibility analysis and per-wall probability maps for every wall surface.
pub fn compute_maps(
    model: &BuildingModel,
    cloud: &LabeledPointCloud,
    textures: &BTreeMap<String, TextureRaster>,
    cfg: &RunConfig,
) -> Result<MapsOutput, PipelineError> {
    cfg.validate()?;
    for id in textures.keys() {
        if !model
            .surface(id)
            .is_some_and(|s| s.kind == SurfaceKind::WallSurface)
        {
            return Err(PipelineError::UnknownTextureWall(id.clone()));
        }
    }
    let priors = cfg.priors()?;
    let grid = visibility::build_grid(cloud, model, cfg.voxel_size, cfg.padding)?;
    let occ = visibility::cast_all(&grid, cloud, cfg.jobs)?;
    let states = visibility::voxel_state(&occ);

    let mut planes = Vec::new();
    for s in model.buildings.iter().flat_map(|b| b.walls()) {
        let frame = wall_frame_from_polygon(&s.geometry).map_err(|e| PipelineError::Geometry {
            wall_id: s.id.clone(),
            source: e,
        })?;
        planes.push(WallPlane::new(s.id.clone(), frame, frame.project_polygon(&s.geometry)));
    }

    let pool = pool(cfg.jobs)?;
    pool.install(|| {
        let sg = visibility::classify_conflicts(&states, &occ, &planes, &cfg.uncertainty());
        let walls = planes
            .par_iter()
            .map(|p| wall_maps(&sg, p, cloud, textures.get(&p.id), &priors, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MapsOutput { states: sg, walls })
    })
}

fn wall_maps(
    sg: &StateGrid,
    plane: &WallPlane,
    cloud: &LabeledPointCloud,
    texture: Option<&TextureRaster>,
    priors: &Priors,
    cfg: &RunConfig,
) -> Result<WallMaps, PipelineError> {
    let map_err = |source| PipelineError::Map {
        wall_id: plane.id.clone(),
        source,
    };
    let (conflict, observed) = match maps::rasterize_conflicts(sg, &plane.id, &plane.outline, cfg.resolution) {
        Ok(m) => (m, true),
        Err(MapError::EmptyWall(_)) => (
            maps::uninformative_conflict_map(&plane.frame, &plane.outline, cfg.resolution).map_err(map_err)?,
            false,
        ),
        Err(e) => return Err(map_err(e)),
    };
    let point_labels =
        maps::rasterize_point_labels(cloud, &plane.frame, cfg.resolution, cfg.max_offset).map_err(map_err)?;
    let texture = texture
        .map(|t| maps::ingest_texture_map(t, &plane.frame, cfg.resolution))
        .transpose()
        .map_err(map_err)?;
    let posterior =
        fusion::fuse(&conflict, &point_labels, texture.as_ref(), priors).map_err(|source| PipelineError::Fusion {
            wall_id: plane.id.clone(),
            source,
        })?;
    Ok(WallMaps {
        wall_id: plane.id.clone(),
        frame: plane.frame,
        outline: plane.outline.clone(),
        conflict,
        conflict_observed: observed,
        point_labels,
        texture,
        posterior,
    })
}

/// Instance that made it into the model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedObject {
    pub id: String,
    pub class: FacadeClass,
    pub rect: Rect2,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WallReport {
    pub wall_id: String,
    pub conflict_observed: bool,
    pub instances: Vec<InstanceSummary>,
    pub cuts: Vec<CutRecord>,
    pub embedded: Vec<EmbeddedObject>,
    pub skipped: Vec<SkippedInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceSummary {
    pub class: FacadeClass,
    pub rect: Rect2,
    pub confidence: f64,
    pub pixel_count: usize,
}

impl From<&OpeningInstance> for InstanceSummary {
    fn from(i: &OpeningInstance) -> Self {
        InstanceSummary {
            class: i.class,
            rect: i.rect,
            confidence: i.confidence,
            pixel_count: i.pixel_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub model: BuildingModel,
    pub walls: Vec<WallReport>,
    pub validation: ValidationReport,
    pub maps: MapsOutput,
}

impl Refinement {
    pub fn skipped_count(&self) -> usize {
        self.walls.iter().map(|w| w.skipped.len()).sum()
    }

    /// Clean run: nothing skipped and no validation findings.
    pub fn is_clean(&self) -> bool {
        self.skipped_count() == 0 && self.validation.is_clean()
    }

    pub fn report_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            walls: &'a [WallReport],
            validation: &'a ValidationReport,
            skipped: usize,
            findings: usize,
        }
        serde_json::to_string_pretty(&Report {
            walls: &self.walls,
            validation: &self.validation,
            skipped: self.skipped_count(),
            findings: self.validation.count(),
        })
        .expect("report serialization is infallible")
            + "\n"
    }
}

/// Runs the whole refinement and returns the updated model with per-wall
/// reports. Embedding errors of single instances are recorded as skips.
pub fn refine(
    model: &BuildingModel,
    cloud: &LabeledPointCloud,
    textures: &BTreeMap<String, TextureRaster>,
    library: &Library,
    cfg: &RunConfig,
    timestamp: &str,
) -> Result<Refinement, PipelineError> {
    if chrono::DateTime::parse_from_rfc3339(timestamp).is_err() {
        return Err(PipelineError::Config(format!("timestamp {timestamp:?} is not RFC 3339")));
    }
    let maps = compute_maps(model, cloud, textures, cfg)?;
    let rule = cfg.underpass_rule.then(UnderpassRule::default);

    let mut out = model.clone();
    let mut reports = Vec::with_capacity(maps.walls.len());
    for wm in &maps.walls {
        let instances = fusion::extract_instances_with(
            &wm.posterior,
            &ExtractOptions {
                threshold: cfg.threshold,
                min_area: cfg.min_area,
                wall_id: wm.wall_id.clone(),
                underpass_rule: rule,
            },
        );
        let wall = out
            .surface(&wm.wall_id)
            .expect("wall ids come from the model")
            .clone();
        let outcome = reconstruct::cut_openings(&wall, &instances, &wm.frame, cfg.cut_margin);
        let mut skipped = outcome.skipped;
        let mut embedded = Vec::new();
        let mut cuts = Vec::new();

        let skip = |members: &[usize], reason: String, skipped: &mut Vec<SkippedInstance>| {
            for &m in members {
                skipped.push(SkippedInstance {
                    index: m,
                    class: instances[m].class,
                    rect: instances[m].rect,
                    reason: reason.clone(),
                });
            }
        };

        for cut in outcome.cuts {
            let pixels = cut.members.iter().map(|&m| instances[m].pixel_count).sum();
            let inst = cut.as_instance(&wm.wall_id, pixels);
            let placed = library
                .get(inst.class)
                .map_err(|e| e.to_string())
                .and_then(|lib| {
                    reconstruct::fit_object(&inst, lib, &wm.frame, -cfg.opening_depth).map_err(|e| e.to_string())
                });
            let result = placed.and_then(|p| {
                embed::embed_opening(&out, &wm.wall_id, &p, timestamp)
                    .map_err(|e: EmbedError| e.to_string())
            });
            match result {
                Ok(m) => {
                    embedded.push(EmbeddedObject {
                        id: last_added_id(&out, &m),
                        class: inst.class,
                        rect: inst.rect,
                        confidence: inst.confidence,
                    });
                    out = m;
                    cuts.push(cut);
                }
                Err(reason) => skip(&cut.members, reason, &mut skipped),
            }
        }

        for (k, inst) in instances.iter().enumerate() {
            if !inst.class.is_installation() {
                continue;
            }
            let result = library
                .get(inst.class)
                .map_err(|e| e.to_string())
                .and_then(|lib| {
                    reconstruct::build_installation_geometry(inst, lib, &wm.frame, cfg.installation_depth)
                        .map_err(|e| e.to_string())
                })
                .and_then(|p| embed::embed_installation(&out, &wm.wall_id, &p, timestamp).map_err(|e| e.to_string()));
            match result {
                Ok(m) => {
                    embedded.push(EmbeddedObject {
                        id: last_added_id(&out, &m),
                        class: inst.class,
                        rect: inst.rect,
                        confidence: inst.confidence,
                    });
                    out = m;
                }
                Err(reason) => skip(&[k], reason, &mut skipped),
            }
        }
        skipped.sort_by_key(|s| s.index);
        reports.push(WallReport {
            wall_id: wm.wall_id.clone(),
            conflict_observed: wm.conflict_observed,
            instances: instances.iter().map(InstanceSummary::from).collect(),
            cuts,
            embedded,
            skipped,
        });
    }
    let validation = validate_model(&out);
    Ok(Refinement {
        model: out,
        walls: reports,
        validation,
        maps,
    })
}

/// Id present in `after` but not in `before`.
fn last_added_id(before: &BuildingModel, after: &BuildingModel) -> String {
    let old: std::collections::HashSet<&str> = before.ids().collect();
    after
        .ids()
        .find(|id| !old.contains(id))
        .unwrap_or_default()
        .to_string()
}
