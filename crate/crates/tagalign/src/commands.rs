//! The four commands. Each computes everything first and writes its outputs
//! at the end, each file atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{Matrix3, Vector3};
use tagalign_core::synth::{decompose_similarity, SIMILARITY_TOLERANCE};
use tagalign_core::{
    align, evaluate, generate_scene, localize_all_tags, AlignError, ClusterConfig, Correspondence,
    CorrespondenceSet, DescribedCloud, Descriptors, HomogeneousTransform, MetricMode, Point3, PointCloud,
    RatioTestConfig, SceneConfig, SimilarityTransform, TagFeatureSet, Truth,
};

use crate::config::{ClusterSettings, Direction, EvalConfig, Gates, Method, PipelineConfig};
use crate::ingest::{
    join_descriptors_to_points, parse_feature_archive, parse_ply, parse_reconstruction, parse_slam_export,
    parse_tracks, parse_trajectory, FeatureArchive, JoinedCloud, FEAT1_EXTENSION,
};
use crate::report::{
    read_json, to_json, AlignmentReport, GateResult, MetricsReport, TagReport, TruthManifest,
};
use crate::CliError;

/// Colors given to colorless clouds in the merged output.
pub const SOURCE_COLOR: [u8; 3] = [255, 0, 0];
pub const TARGET_COLOR: [u8; 3] = [200, 200, 200];

/// Tags needed in each cloud (and in common) to estimate a transform.
pub const MIN_TAGS: usize = 4;

pub const SLAM_REPORT: &str = "tags_slam.json";
pub const SFM_REPORT: &str = "tags_sfm.json";
pub const ALIGNMENT_REPORT: &str = "alignment.json";
pub const MERGED_PLY: &str = "merged.ply";
pub const METRICS_REPORT: &str = "metrics.json";

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn write_all(files: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
    for (path, bytes) in files {
        write_atomic(path, bytes)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Reads every `<image>.feat1` in `dir`.
pub fn load_feature_dir(dir: &Path) -> Result<FeatureArchive, CliError> {
    let mut archive = FeatureArchive::new();
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(FEAT1_EXTENSION) {
            continue;
        }
        let Some(image) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let descs = parse_feature_archive(&read_bytes(&path)?).map_err(|e| CliError::parse(&path, e))?;
        archive.insert(image.to_string(), descs);
    }
    Ok(archive)
}

/// The two described clouds of a pipeline config.
pub struct Clouds {
    pub slam: DescribedCloud,
    pub sfm: JoinedCloud,
}

pub fn load_clouds(cfg: &PipelineConfig) -> Result<Clouds, CliError> {
    let i = &cfg.inputs;
    let map = parse_slam_export(&read_text(&i.slam_map)?).map_err(|e| CliError::parse(&i.slam_map, e))?;
    if let Some(path) = &i.slam_trajectory {
        let poses = parse_trajectory(&read_text(path)?).map_err(|e| CliError::parse(path, e))?;
        info!("trajectory: {} poses", poses.len());
    }
    let slam = map.to_described_cloud().map_err(|e| CliError::parse(&i.slam_map, e))?;
    let rec = parse_reconstruction(&read_text(&i.sfm_reconstruction)?)
        .map_err(|e| CliError::parse(&i.sfm_reconstruction, e))?;
    let tracks = parse_tracks(&read_text(&i.sfm_tracks)?).map_err(|e| CliError::parse(&i.sfm_tracks, e))?;
    let feats = load_feature_dir(&i.sfm_features)?;
    let sfm = join_descriptors_to_points(&rec, &tracks, &feats).map_err(|e| CliError::parse(&i.sfm_features, e))?;
    let r = &sfm.report;
    if r.unknown_tracks + r.missing_images + r.out_of_range_features + r.duplicate_tracks > 0 {
        warn!(
            "join: {} unknown tracks, {} rows with missing images, {} out-of-range features, {} duplicate tracks",
            r.unknown_tracks, r.missing_images, r.out_of_range_features, r.duplicate_tracks
        );
    }
    info!(
        "slam: {} points; sfm: {} points with {} descriptors, {} excluded",
        slam.points().len(),
        sfm.cloud.points().len(),
        sfm.cloud.descriptors().len(),
        r.excluded_points
    );
    Ok(Clouds { slam, sfm })
}

pub fn load_tags(cfg: &PipelineConfig) -> Result<(Vec<TagFeatureSet>, Vec<TagFeatureSet>), CliError> {
    let mut slam = Vec::new();
    let mut sfm = Vec::new();
    for t in &cfg.tags {
        let map = parse_slam_export(&read_text(&t.slam)?).map_err(|e| CliError::parse(&t.slam, e))?;
        let binary = Descriptors::Binary(map.points.iter().map(|p| p.descriptor).collect());
        slam.push(TagFeatureSet::new(t.id.clone(), binary).map_err(|e| CliError::parse(&t.slam, e))?);
        let float = parse_feature_archive(&read_bytes(&t.sfm)?).map_err(|e| CliError::parse(&t.sfm, e))?;
        sfm.push(TagFeatureSet::new(t.id.clone(), Descriptors::Float(float)).map_err(|e| CliError::parse(&t.sfm, e))?);
    }
    Ok((slam, sfm))
}

fn localize_cloud(
    tags: &[TagFeatureSet],
    cloud: &DescribedCloud,
    matching: &RatioTestConfig,
    settings: &ClusterSettings,
) -> Result<TagReport, CliError> {
    let epsilon = settings.epsilon_for(cloud.points());
    let cluster =
        ClusterConfig::new(epsilon, settings.min_support).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let outcome = localize_all_tags(tags, cloud, matching, &cluster).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    for m in &outcome.misses {
        warn!(
            "{}: tag {} not localized ({} potential matches, largest cluster {})",
            cloud.label(),
            m.tag_id,
            m.potential_matches,
            m.largest_cluster
        );
    }
    for (a, b) in &outcome.coincident {
        warn!("{}: tags {a} and {b} localized within epsilon of each other", cloud.label());
    }
    info!("{}: {} of {} tags localized (epsilon {epsilon})", cloud.label(), outcome.locations.len(), tags.len());
    Ok(TagReport::from_outcome(cloud.label(), epsilon, settings.min_support, &outcome))
}

fn require_tags(cfg: &PipelineConfig) -> Result<(), CliError> {
    if cfg.tags.len() < MIN_TAGS {
        return Err(CliError::Insufficient(format!(
            "{} tags configured, at least {MIN_TAGS} are needed",
            cfg.tags.len()
        )));
    }
    Ok(())
}

/// Localizes every configured tag in both clouds.
pub fn localize(cfg: &PipelineConfig, clouds: &Clouds) -> Result<(TagReport, TagReport), CliError> {
    let (slam_tags, sfm_tags) = load_tags(cfg)?;
    let slam = localize_cloud(&slam_tags, &clouds.slam, &cfg.matching.slam, &cfg.clustering.slam)?;
    let mut sfm = localize_cloud(&sfm_tags, &clouds.sfm.cloud, &cfg.matching.sfm, &cfg.clustering.sfm)?;
    sfm.join = Some(clouds.sfm.report);
    Ok((slam, sfm))
}

/// Overrides applied on top of a pipeline config.
#[derive(Debug, Clone, Default)]
pub struct PipelineOverrides {
    pub output_dir: Option<PathBuf>,
    pub method: Option<Method>,
    pub direction: Option<Direction>,
}

pub fn load_pipeline(path: &Path, o: &PipelineOverrides) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(d) = &o.output_dir {
        cfg.inputs.output_dir = d.clone();
    }
    if let Some(m) = o.method {
        cfg.alignment.method = m;
    }
    if let Some(d) = o.direction {
        cfg.alignment.direction = d;
    }
    require_tags(&cfg)?;
    cfg.check_inputs()?;
    Ok(cfg)
}

pub fn cmd_localize(cfg: &PipelineConfig) -> Result<(TagReport, TagReport), CliError> {
    let clouds = load_clouds(cfg)?;
    let (slam, sfm) = localize(cfg, &clouds)?;
    let out = &cfg.inputs.output_dir;
    write_all(&[
        (out.join(SLAM_REPORT), to_json(&slam).into_bytes()),
        (out.join(SFM_REPORT), to_json(&sfm).into_bytes()),
    ])?;
        if slam.tags.len() < MIN_TAGS || sfm.tags.len() < MIN_TAGS {
        return Err(CliError::Insufficient(format!(
            "localized {} SLAM tags and {} SfM tags, need at least {MIN_TAGS} in both",
            slam.tags.len(),
            sfm.tags.len()
        )));
    }
    Ok((slam, sfm))
}

/// Pairs tags present in both reports, in source report order.
pub fn correspondences(source: &TagReport, target: &TagReport) -> Result<CorrespondenceSet, AlignError> {
    let pairs = source
        .tags
        .iter()
        .filter_map(|s| {
            target.coordinate(&s.tag_id).map(|t| Correspondence {
                tag_id: s.tag_id.clone(),
                source: s.coordinate.into(),
                target: t,
            })
        })
        .collect();
    CorrespondenceSet::new(pairs)
}

fn align_error(e: AlignError) -> CliError {
    match e {
        AlignError::TooFewCorrespondences { .. } => CliError::Insufficient(e.to_string()),
        AlignError::DuplicateTag(_) => CliError::InvalidConfig(e.to_string()),
        AlignError::DegenerateConfiguration(_) | AlignError::Geometry(_) => CliError::Degenerate(e.to_string()),
    }
}

fn with_color(cloud: PointCloud, color: [u8; 3]) -> PointCloud {
    let (points, colors) = cloud.into_parts();
    let n = points.len();
    PointCloud::new(points, Some(colors.unwrap_or_else(|| vec![color; n]))).expect("one color per point")
}

fn sfm_cloud(cfg: &PipelineConfig, clouds: &Clouds) -> Result<PointCloud, CliError> {
    match &cfg.inputs.sfm_dense {
        Some(path) => parse_ply(&read_bytes(path)?).map_err(|e| CliError::parse(path, e)),
        None => Ok(PointCloud::new(clouds.sfm.cloud.points().to_vec(), clouds.sfm.colors.clone())
            .expect("one color per point")),
    }
}

/// Source cloud moved by `h` followed by the target cloud.
pub fn merge(source: &PointCloud, target: &PointCloud, h: &HomogeneousTransform) -> PointCloud {
    let moved = with_color(tagalign_core::transform_cloud(source, h), SOURCE_COLOR);
    let target = with_color(target.clone(), TARGET_COLOR);
    let (mut points, colors) = moved.into_parts();
    let mut colors = colors.expect("colored");
    let (tp, tc) = target.into_parts();
    points.extend(tp);
    colors.extend(tc.expect("colored"));
    PointCloud::new(points, Some(colors)).expect("one color per point")
}

/// Tag reports to align from, instead of localizing inline.
#[derive(Debug, Clone, Default)]
pub struct ReportPaths {
    pub slam: Option<PathBuf>,
    pub sfm: Option<PathBuf>,
}

pub fn cmd_align(cfg: &PipelineConfig, reports: &ReportPaths) -> Result<AlignmentReport, CliError> {
    let clouds = load_clouds(cfg)?;
    let (slam_report, sfm_report) = match (&reports.slam, &reports.sfm) {
        (Some(a), Some(b)) => (read_json::<TagReport>(a)?, read_json::<TagReport>(b)?),
        (None, None) => localize(cfg, &clouds)?,
        _ => {
            return Err(CliError::InvalidConfig(
                "give both tag reports or neither".into(),
            ))
        }
    };
    let direction = cfg.alignment.direction;
    let slam_points = PointCloud::from_points(clouds.slam.points().to_vec());
    let sfm_points = sfm_cloud(cfg, &clouds)?;
    let (source_report, target_report, source, target) = match direction {
        Direction::SlamToSfm => (&slam_report, &sfm_report, &slam_points, &sfm_points),
        Direction::SfmToSlam => (&sfm_report, &slam_report, &sfm_points, &slam_points),
    };
    let c = correspondences(source_report, target_report).map_err(align_error)?;
    info!("aligning on {} common tags ({})", c.len(), direction.as_str());
    let alignment = align(&c, cfg.alignment.method.into()).map_err(align_error)?;
    info!("alignment rmse {:e}", alignment.residuals.rmse);
    let report = AlignmentReport {
        method: alignment.method.as_str().into(),
        direction,
        matrix: alignment.transform.to_row_major().to_vec(),
        per_tag_residuals: alignment.residuals.per_tag.iter().cloned().collect(),
        rmse: alignment.residuals.rmse,
        singular_values: alignment.singular_values.clone(),
        tags_used: c.pairs().iter().map(|p| p.tag_id.clone()).collect(),
    };
    let merged = merge(source, target, &alignment.transform);
    let out = &cfg.inputs.output_dir;
    write_all(&[
        (out.join(ALIGNMENT_REPORT), to_json(&report).into_bytes()),
        (out.join(MERGED_PLY), crate::ingest::write_ply(&merged)),
    ])?;
    Ok(report)
}

pub fn load_scene_config(path: &Path, seed: Option<u64>) -> Result<SceneConfig, CliError> {
    let mut cfg: SceneConfig = toml::from_str(&read_text(path)?).map_err(|e| CliError::parse(path, e))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    Ok(cfg)
}

/// Generates a scene and writes it under `out`.
pub fn cmd_synth(cfg: &SceneConfig, out: &Path) -> Result<TruthManifest, CliError> {
    let scene = generate_scene(cfg).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let files: Vec<(PathBuf, Vec<u8>)> =
        crate::scene::export_scene(&scene).into_iter().map(|(p, b)| (out.join(p), b)).collect();
    write_all(&files)?;
    Ok(crate::scene::truth_manifest(&scene))
}

fn truth_from_manifest(m: &TruthManifest, path: &Path) -> Result<Truth, CliError> {
    let values: [f64; 16] = m
        .transform
        .as_slice()
        .try_into()
        .map_err(|_| CliError::parse(path, "transform must have 16 entries"))?;
    let transform = HomogeneousTransform::from_row_major(&values).map_err(|e| CliError::parse(path, e))?;
    let similarity = match &m.similarity {
        None => None,
        Some(s) => {
            let r: [f64; 9] = s
                .rotation
                .as_slice()
                .try_into()
                .map_err(|_| CliError::parse(path, "rotation must have 9 entries"))?;
            let rotation = Matrix3::from_row_slice(&r);
            let t = Vector3::from(s.translation);
            Some(SimilarityTransform::new(s.scale, rotation, t).map_err(|e| CliError::parse(path, e))?)
        }
    };
    Ok(Truth { transform, similarity })
}

fn check_gates(metrics: &tagalign_core::EvalMetrics, gates: &Gates) -> Vec<GateResult> {
    let mut out = Vec::new();
    let mut upper = |gate: &str, limit: Option<f64>, value: Option<f64>| {
        if let Some(limit) = limit {
            if value.is_none() {
                warn!("gate {gate}: metric undefined, not checked");
            }
            out.push(GateResult {
                gate: gate.into(),
                limit,
                value,
                passed: value.is_none_or(|v| v <= limit),
            });
        }
    };
    upper("max_rotation_error_rad", gates.max_rotation_error_rad, metrics.rotation_error_rad);
    upper("max_scale_error_rel", gates.max_scale_error_rel, metrics.scale_error_rel);
    upper("max_translation_error", gates.max_translation_error, Some(metrics.translation_error));
    upper("max_tag_centroid_rmse", gates.max_tag_centroid_rmse, Some(metrics.tag_centroid_rmse));
    if let Some(min) = gates.min_tags_recovered {
        out.push(GateResult {
            gate: "min_tags_recovered".into(),
            limit: min as f64,
            value: Some(metrics.tags_recovered as f64),
            passed: metrics.tags_recovered >= min,
        });
    }
    out
}

/// Evaluates an alignment report against a truth manifest.
pub fn evaluate_report(
    manifest: &TruthManifest,
    manifest_path: &Path,
    report: &AlignmentReport,
    report_path: &Path,
    gates: &Gates,
) -> Result<MetricsReport, CliError> {
    let truth = truth_from_manifest(manifest, manifest_path)?;
    let recovered = report.transform().map_err(|e| CliError::parse(report_path, e))?;
    let by_id: BTreeMap<&str, _> = manifest.tags.iter().map(|t| (t.tag_id.as_str(), t)).collect();
    let mut sites = Vec::new();
    for id in &report.tags_used {
        let tag = by_id
            .get(id.as_str())
            .ok_or_else(|| CliError::parse(report_path, format!("tag `{id}` is not in the manifest")))?;
        sites.push(Point3::from(match report.direction {
            Direction::SlamToSfm => tag.slam_centroid,
            Direction::SfmToSlam => tag.sfm_centroid,
        }));
    }
    let truth = match report.direction {
        Direction::SlamToSfm => truth,
        Direction::SfmToSlam => {
            let inverse = truth
                .transform
                .inverse()
                .ok_or_else(|| CliError::parse(manifest_path, "truth transform is singular"))?;
            Truth {
                similarity: decompose_similarity(&inverse, SIMILARITY_TOLERANCE),
                transform: inverse,
            }
        }
    };
    let metrics = evaluate(&recovered, &truth, &sites, manifest.tags.len(), MetricMode::Auto)
        .map_err(|e| CliError::parse(report_path, e))?;
    let gates = check_gates(&metrics, gates);
    let passed = gates.iter().all(|g| g.passed);
    Ok(MetricsReport { metrics, gates, passed })
}

pub fn summary(m: &MetricsReport) -> String {
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
    let mut s = format!(
        "rotation error (rad): {}\nscale error (rel): {}\ntranslation error: {:.3e}\nmax entry error: {:.3e}\ntag centroid rmse: {:.3e}\ntags recovered: {}/{}\n",
        fmt(m.metrics.rotation_error_rad),
        fmt(m.metrics.scale_error_rel),
        m.metrics.translation_error,
        m.metrics.max_entry_error,
        m.metrics.tag_centroid_rmse,
        m.metrics.tags_recovered,
        m.metrics.tags_expected,
    );
    for g in &m.gates {
        s.push_str(&format!(
            "gate {}: {} (value {}, limit {:e})\n",
            g.gate,
            if g.passed { "pass" } else { "FAIL" },
            fmt(g.value),
            g.limit
        ));
    }
    s
}

#[derive(Debug, Clone, Default)]
pub struct EvalOverrides {
    pub manifest: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

pub fn load_eval(path: &Path, o: &EvalOverrides) -> Result<EvalConfig, CliError> {
    let mut cfg = EvalConfig::load(path)?;
    if let Some(p) = &o.manifest {
        cfg.manifest = p.clone();
    }
    if let Some(p) = &o.report {
        cfg.report = p.clone();
    }
    if let Some(p) = &o.output_dir {
        cfg.output_dir = p.clone();
    }
    Ok(cfg)
}

/// Writes `metrics.json`; fails with exit code 4 when a gate is exceeded.
pub fn cmd_eval(cfg: &EvalConfig) -> Result<MetricsReport, CliError> {
    let manifest: TruthManifest = read_json(&cfg.manifest)?;
    let report: AlignmentReport = read_json(&cfg.report)?;
    let metrics = evaluate_report(&manifest, &cfg.manifest, &report, &cfg.report, &cfg.gates)?;
    write_all(&[(cfg.output_dir.join(METRICS_REPORT), to_json(&metrics).into_bytes())])?;
    Ok(metrics)
}
