//! Batch front end: `refine`, `maps` and `validate`.
//!
//! Exit codes: 0 success, 1 fatal error, 2 the run finished but produced
//! validation findings or skipped instances.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lod3_refine::cloud::{parse_point_cloud_with, LabelMapping, LabeledPointCloud};
use lod3_refine::maps::{export_map_pgm, load_texture_raster, Channel, TextureRaster};
use lod3_refine::model::{export_citygml, parse_model, serialize_model, validate_model, BuildingModel};
use lod3_refine::pipeline::{compute_maps, refine, RunConfig};
use lod3_refine::reconstruct::{builtin_library, load_library};
use lod3_refine::FacadeClass;

#[derive(Parser)]
#[command(name = "lod3-refine", version, about = "Refine LoD1/LoD2 building models to LoD3 with labeled MLS point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect, reconstruct and embed facade elements; write the refined model.
    Refine(RunArgs),
    /// Write conflict, point-cloud and posterior maps of every wall as PGM.
    Maps(RunArgs),
    /// Check a model for planarity, watertightness and attribute problems.
    Validate {
        /// Model to check (.cm.json).
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Input building model (.cm.json).
    #[arg(long)]
    model: PathBuf,
    /// Labeled point cloud with sensor origins.
    #[arg(long)]
    cloud: PathBuf,
    /// JSON object mapping wall ids to texture rasters (.pgm or .json sidecar).
    #[arg(long)]
    textures: Option<PathBuf>,
    /// Library of objects (JSON); the bundled library is used otherwise.
    #[arg(long)]
    library: Option<PathBuf>,
    /// CSV `code,class_name` table for point labels and PGM textures.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Acquisition time (RFC 3339); defaults to the cloud file's modification time.
    #[arg(long)]
    timestamp: Option<String>,
    /// Voxel edge in metres [0.1].
    #[arg(long)]
    voxel_size: Option<f64>,
    /// Grid margin in metres [0.5].
    #[arg(long)]
    padding: Option<f64>,
    /// Map pixel size in metres [0.05].
    #[arg(long)]
    resolution: Option<f64>,
    /// Positional uncertainty of the model in metres [0.3].
    #[arg(long)]
    sigma_model: Option<f64>,
    /// Positional uncertainty of the scan in metres [0.05].
    #[arg(long)]
    sigma_point: Option<f64>,
    /// Largest point distance from a wall for the label map [0.3].
    #[arg(long)]
    max_offset: Option<f64>,
    /// Posterior needed for an opening pixel [0.5].
    #[arg(long)]
    threshold: Option<f64>,
    /// Smallest instance in square metres [0.1].
    #[arg(long)]
    min_area: Option<f64>,
    /// Recess of windows, doors and underpasses [0.15].
    #[arg(long)]
    opening_depth: Option<f64>,
    /// Protrusion of installations [0.3].
    #[arg(long)]
    installation_depth: Option<f64>,
    /// Worker threads; results do not depend on it [1].
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write per-wall PGM maps to <out>/maps.
    #[arg(long)]
    export_maps: bool,
    /// Also write the classified voxels to <out>/voxels.txt.
    #[arg(long)]
    export_voxels: bool,
    /// Keep tall ground-level openings as doors or windows.
    #[arg(long)]
    disable_underpass_rule: bool,
}

struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Fatal> {
    std::fs::read(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Fatal> {
    std::fs::write(path, bytes).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path) -> impl Fn(String) -> Fatal + '_ {
    move |e| Fatal(format!("{}: {e}", path.display()))
}

struct Inputs {
    model: BuildingModel,
    cloud: LabeledPointCloud,
    textures: BTreeMap<String, TextureRaster>,
    config: RunConfig,
}

fn config_from(args: &RunArgs) -> Result<RunConfig, Fatal> {
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_slice(&read(p)?).map_err(|e| in_file(p)(e.to_string()))?,
        None => RunConfig::default(),
    };
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut cfg.voxel_size, args.voxel_size);
    set(&mut cfg.padding, args.padding);
    set(&mut cfg.resolution, args.resolution);
    set(&mut cfg.sigma_model, args.sigma_model);
    set(&mut cfg.sigma_point, args.sigma_point);
    set(&mut cfg.max_offset, args.max_offset);
    set(&mut cfg.threshold, args.threshold);
    set(&mut cfg.min_area, args.min_area);
    set(&mut cfg.opening_depth, args.opening_depth);
    set(&mut cfg.installation_depth, args.installation_depth);
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    cfg.export_maps |= args.export_maps;
    cfg.export_voxels |= args.export_voxels;
    if args.disable_underpass_rule {
        cfg.underpass_rule = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_inputs(args: &RunArgs) -> Result<Inputs, Fatal> {
    let config = config_from(args)?;
    let mapping = match &args.labels {
        Some(p) => LabelMapping::from_csv(&read(p)?).map_err(|e| in_file(p)(e.to_string()))?,
        None => LabelMapping::default(),
    };
    let model = parse_model(&read(&args.model)?).map_err(|e| in_file(&args.model)(e.to_string()))?;
    let cloud = parse_point_cloud_with(&read(&args.cloud)?, &mapping).map_err(|e| in_file(&args.cloud)(e.to_string()))?;
    let mut textures = BTreeMap::new();
    if let Some(p) = &args.textures {
        let manifest: BTreeMap<String, String> =
            serde_json::from_slice(&read(p)?).map_err(|e| in_file(p)(e.to_string()))?;
        let base = p.parent().unwrap_or(Path::new("."));
        for (wall, file) in manifest {
            let path = base.join(file);
            let raster = load_texture_raster(&path, &mapping).map_err(|e| in_file(&path)(e.to_string()))?;
            textures.insert(wall, raster);
        }
    }
    Ok(Inputs {
        model,
        cloud,
        textures,
        config,
    })
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn create_dir(p: &Path) -> Result<(), Fatal> {
    std::fs::create_dir_all(p).map_err(|e| Fatal(format!("{}: {e}", p.display())))
}

fn acquisition_time(args: &RunArgs) -> Result<String, Fatal> {
    if let Some(t) = &args.timestamp {
        return Ok(t.clone());
    }
    let modified = std::fs::metadata(&args.cloud)
        .and_then(|m| m.modified())
        .map_err(|e| Fatal(format!("{}: {e}", args.cloud.display())))?;
    Ok(chrono::DateTime::<chrono::Utc>::from(modified).to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn write_maps(dir: &Path, walls: &[lod3_refine::pipeline::WallMaps]) -> Result<(), Fatal> {
    create_dir(dir)?;
    for w in walls {
        let stem = file_stem(&w.wall_id);
        write(&dir.join(format!("{stem}_conflict.pgm")), &export_map_pgm(&w.conflict, Channel::Conflict)?)?;
        write(
            &dir.join(format!("{stem}_pointcloud.pgm")),
            &export_map_pgm(&w.point_labels, Channel::Openings)?,
        )?;
        write(
            &dir.join(format!("{stem}_posterior.pgm")),
            &export_map_pgm(&w.posterior, Channel::Openings)?,
        )?;
        if let Some(t) = &w.texture {
            write(&dir.join(format!("{stem}_texture.pgm")), &export_map_pgm(t, Channel::Openings)?)?;
        }
    }
    Ok(())
}

fn cmd_refine(args: &RunArgs) -> Result<u8, Fatal> {
    let inputs = load_inputs(args)?;
    let library = match &args.library {
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|e| in_file(p)(e.to_string()))?;
            load_library(&text).map_err(|e| in_file(p)(e.to_string()))?
        }
        None => builtin_library(),
    };
    let timestamp = acquisition_time(args)?;
    let r = refine(
        &inputs.model,
        &inputs.cloud,
        &inputs.textures,
        &library,
        &inputs.config,
        &timestamp,
    )?;
    create_dir(&args.out)?;
    write(&args.out.join("refined.cm.json"), &serialize_model(&r.model))?;
    write(&args.out.join("refined.gml"), &export_citygml(&r.model)?)?;
    write(&args.out.join("report.json"), r.report_json().as_bytes())?;
    if inputs.config.export_maps {
        write_maps(&args.out.join("maps"), &r.maps.walls)?;
    }
    if inputs.config.export_voxels {
        write(&args.out.join("voxels.txt"), r.maps.states.debug_dump().as_bytes())?;
    }
    let embedded: usize = r.walls.iter().map(|w| w.embedded.len()).sum();
    let windows = r
        .walls
        .iter()
        .flat_map(|w| &w.embedded)
        .filter(|e| e.class == FacadeClass::Window)
        .count();
    eprintln!(
        "refined {} walls: {embedded} objects embedded ({windows} windows), {} skipped, {} findings",
        r.walls.len(),
        r.skipped_count(),
        r.validation.count()
    );
    for w in &r.walls {
        for s in &w.skipped {
            eprintln!("skipped {} instance {} on {}: {}", s.class, s.index, w.wall_id, s.reason);
        }
    }
    Ok(if r.is_clean() { 0 } else { 2 })
}

fn cmd_maps(args: &RunArgs) -> Result<u8, Fatal> {
    let inputs = load_inputs(args)?;
    let out = compute_maps(&inputs.model, &inputs.cloud, &inputs.textures, &inputs.config)?;
    write_maps(&args.out, &out.walls)?;
    if inputs.config.export_voxels {
        write(&args.out.join("voxels.txt"), out.states.debug_dump().as_bytes())?;
    }
    eprintln!("wrote maps for {} walls to {}", out.walls.len(), args.out.display());
    Ok(0)
}

fn cmd_validate(model: &Path) -> Result<u8, Fatal> {
    let m = parse_model(&read(model)?).map_err(|e| in_file(model)(e.to_string()))?;
    let report = validate_model(&m);
    for (building, f) in report.findings() {
        println!("{building}: {}", serde_json::to_string(f)?);
    }
    if report.is_clean() {
        println!("ok: {} buildings, no findings", m.buildings.len());
        Ok(0)
    } else {
        println!("{} findings", report.count());
        Ok(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Refine(a) => cmd_refine(a),
        Command::Maps(a) => cmd_maps(a),
        Command::Validate { model } => cmd_validate(model),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
