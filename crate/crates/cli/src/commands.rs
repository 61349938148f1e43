use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use smvslab::attack::{attack_dataset, attack_manifest, AttackModel, AttackSpec, SpooferState};
use smvslab::dataset::{Dataset, GROUNDTRUTH_FILE, MANIFEST_FILE};
use smvslab::experiment::PipelineKind;
use smvslab::kv::KeyValues;
use smvslab::metrics::{ape, bucket_report, rpe, ApeMode, ApeStats, RunRecord, DEFAULT_BUCKET_EDGES};
use smvslab::pipeline::{build_prior_map, odometry_run, priormap_localize, LocalizationRun, PipelineConfig};
use smvslab::placement::{optimize_placement, PlacementResult, DEFAULT_STANDOFF, DEFAULT_TOP_M};
use smvslab::scene::{build_scene, dataset_manifest, generate_dataset, Archetype, SceneSpec, SensorModel, TrajectorySpec};
use smvslab::smvs::{trajectory_smvs, SmvsConfig, SmvsProfile};
use smvslab::{Execution, PoseSE3, Trajectory};

use crate::settings::{Settings, UsageError};
use crate::{AttackArgs, Command, PlaceArgs, SceneArgs, SmvsArgs};

const TRAJECTORY_FILE: &str = "trajectory.txt";
const FRAMES_FILE: &str = "frames.csv";
const PROFILE_FILE: &str = "smvs.csv";
const PLACEMENT_FILE: &str = "placement.txt";
const METRICS_FILE: &str = "metrics.txt";

const EXEC: Execution = Execution::Parallel;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Scene { common, scene } => {
            let mut s = Settings::new("scene", common.config.as_deref())?;
            let seed = s.seed(common.seed)?;
            let p = SceneParams::resolve(&mut s, scene)?;
            p.generate(seed, &common.out, s.manifest())?;
            Ok(())
        }
        Command::Odom { common, dataset } => {
            let mut s = Settings::new("odom", common.config.as_deref())?;
            s.seed(common.seed)?;
            let dir = s.path("dataset", dataset)?;
            let (ds, _) = load_dataset(&dir)?;
            let run = odometry_run(&ds, &PipelineConfig::default().with_exec(EXEC))?;
            write_run(&common.out, &run)?;
            write_manifest(&common.out, s.manifest())
        }
        Command::Localize { common, dataset, map_dataset } => {
            let mut s = Settings::new("localize", common.config.as_deref())?;
            s.seed(common.seed)?;
            let dir = s.path("dataset", dataset)?;
            let map_dir = s.optional_path("map-dataset", map_dataset)?.unwrap_or_else(|| dir.clone());
            let (ds, gt) = load_dataset(&dir)?;
            let (map_ds, map_gt) = load_dataset(&map_dir)?;
            let map_gt = map_gt.with_context(|| format!("{} has no ground truth to build a prior map from", map_dir.display()))?;
            let init = gt.as_ref().unwrap_or(&map_gt).poses()[0];
            let run = localize_priormap(&ds, &map_ds, &map_gt, &init)?;
            write_run(&common.out, &run)?;
            write_manifest(&common.out, s.manifest())
        }
        Command::Smvs { common, dataset, trajectory, smvs } => {
            let mut s = Settings::new("smvs", common.config.as_deref())?;
            let seed = s.seed(common.seed)?;
            let dir = s.path("dataset", dataset)?;
            let traj = s.optional_path("trajectory", trajectory)?;
            let cfg = smvs_config(&mut s, smvs, seed)?;
            let (ds, gt) = load_dataset(&dir)?;
            let poses = match traj {
                Some(t) => Trajectory::read_tum(&t)?,
                None => gt.with_context(|| format!("{} has no ground truth; pass --trajectory", dir.display()))?,
            };
            let profile = trajectory_smvs(&ds, &poses, &cfg)?;
            ensure_dir(&common.out)?;
            profile.write_csv(common.out.join(PROFILE_FILE))?;
            println!("{} frames profiled, {} skipped", profile.entries.len(), profile.gaps.len());
            write_manifest(&common.out, s.manifest())
        }
        Command::Place { common, profile, place } => {
            let mut s = Settings::new("place", common.config.as_deref())?;
            s.seed(common.seed)?;
            let path = s.path("profile", profile)?;
            let (top_m, standoff) = place_params(&mut s, place)?;
            let profile = SmvsProfile::read_csv(&path)?;
            let result = optimize_placement(&profile, top_m, standoff)?;
            write_placement(&common.out, &result)?;
            write_manifest(&common.out, s.manifest())
        }
        Command::Attack { common, dataset, attack } => {
            let mut s = Settings::new("attack", common.config.as_deref())?;
            let seed = s.seed(common.seed)?;
            let dir = s.path("dataset", dataset)?;
            let params = AttackParams::resolve(&mut s, attack, seed)?;
            let spoofer = params.spoofer(None)?;
            let (ds, gt) = load_dataset(&dir)?;
            let gt = gt.with_context(|| format!("{} has no ground truth; the spoofer aims at the true vehicle pose", dir.display()))?;
            let input_manifest = read_manifest(&dir)?;
            run_attack(&ds, &gt, &input_manifest, &params.spec, &spoofer, &common.out, s.manifest())?;
            Ok(())
        }
        Command::Eval { common, estimate, reference, rpe_delta } => {
            let mut s = Settings::new("eval", common.config.as_deref())?;
            s.seed(common.seed)?;
            let est = s.path("estimate", estimate)?;
            let reference = s.path("reference", reference)?;
            let delta = s.value("rpe-delta", rpe_delta, 1usize)?;
            let metrics = evaluate(&est, &reference, delta)?;
            ensure_dir(&common.out)?;
            metrics.write(common.out.join(METRICS_FILE))?;
            println!("APE rmse {} m, RPE max {} m", metrics.get("ape.rmse").unwrap_or("?"), metrics.get("rpe.trans_max").unwrap_or("?"));
            write_manifest(&common.out, s.manifest())
        }
        Command::Report { common, profile, runs, edges } => {
            let mut s = Settings::new("report", common.config.as_deref())?;
            s.seed(common.seed)?;
            let profile = s.path("profile", profile)?;
            let edges = s.optional("edges", edges)?;
            let runs = if runs.is_empty() {
                match s.optional::<String>("runs", None)? {
                    Some(list) => list.split(';').map(PathBuf::from).collect(),
                    None => bail!(UsageError("--runs is required (flag or config entry)".into())),
                }
            } else {
                let joined: Vec<String> = runs.iter().map(|p| p.display().to_string()).collect();
                s.note("runs", joined.join(";"));
                runs
            };
            let edges = parse_edges(edges.as_deref())?;
            report(&SmvsProfile::read_csv(&profile)?, &runs, &edges, &common.out)?;
            write_manifest(&common.out, s.manifest())
        }
        Command::Pipeline {
            common,
            scene,
            smvs,
            place,
            attack,
            pipeline,
        } => {
            let mut s = Settings::new("pipeline", common.config.as_deref())?;
            let seed = s.seed(common.seed)?;
            let scene = SceneParams::resolve(&mut s, scene)?;
            let smvs_cfg = smvs_config(&mut s, smvs, seed)?;
            let (top_m, standoff) = place_params(&mut s, place)?;
            let attack = AttackParams::resolve(&mut s, attack, seed)?;
            let kind: PipelineKind = s
                .value("pipeline", pipeline, "odometry".to_string())?
                .parse()
                .map_err(|e: smvslab::Error| UsageError(e.to_string()))?;
            full_pipeline(&common.out, &mut s, seed, &scene, &smvs_cfg, top_m, standoff, &attack, kind)
        }
    }
}

struct SceneParams {
    archetype: Archetype,
    length: f64,
    speed: f64,
    frame_rate: f64,
    range_noise: f64,
}

impl SceneParams {
    fn resolve(s: &mut Settings, a: SceneArgs) -> Result<Self> {
        let archetype = s
            .value("scene", a.scene, "mixed".to_string())?
            .parse()
            .map_err(|e: smvslab::Error| UsageError(e.to_string()))?;
        Ok(Self {
            archetype,
            length: s.value("length", a.length, 100.0)?,
            speed: s.value("speed", a.speed, 5.0)?,
            frame_rate: s.value("frame-rate", a.frame_rate, 10.0)?,
            range_noise: s.value("range-noise", a.range_noise, 0.02)?,
        })
    }

    fn generate(&self, seed: u64, out: &Path, run: &KeyValues) -> Result<(Dataset, Trajectory, SensorModel)> {
        let spec = SceneSpec::Archetype {
            kind: self.archetype,
            length: self.length,
        };
        let scene = build_scene(&spec)?;
        let route = TrajectorySpec::straight(self.length, self.speed, self.frame_rate);
        let sensor = SensorModel {
            range_noise: self.range_noise,
            ..SensorModel::default()
        };
        let (ds, gt) = generate_dataset(&scene, &route, &sensor, seed, EXEC)?;
        let mut manifest = dataset_manifest(&spec, &route, &sensor, seed);
        manifest.merge(run);
        ds.save(out, Some(&gt), Some(&manifest))?;
        println!("{} frames written to {}", ds.len(), out.display());
        Ok((ds, gt, sensor))
    }
}

fn smvs_config(s: &mut Settings, a: SmvsArgs, seed: u64) -> Result<SmvsConfig> {
    let d = SmvsConfig::default();
    Ok(SmvsConfig {
        n_regions: s.value("n-regions", a.n_regions, d.n_regions)?,
        d_th: s.value("d-th", a.d_th, d.d_th)?,
        clone_sigma: s.value("clone-sigma", a.clone_sigma, d.clone_sigma)?,
        keep_ratio: s.value("keep-ratio", a.keep_ratio, d.keep_ratio)?,
        seed,
        exec: EXEC,
        ..d
    })
}

fn place_params(s: &mut Settings, a: PlaceArgs) -> Result<(usize, f64)> {
    Ok((s.value("top-m", a.top_m, DEFAULT_TOP_M)?, s.value("standoff", a.standoff, DEFAULT_STANDOFF)?))
}

struct AttackParams {
    spec: AttackSpec,
    position: Option<(f64, f64)>,
    placement: Option<PathBuf>,
}

impl AttackParams {
    fn resolve(s: &mut Settings, a: AttackArgs, seed: u64) -> Result<Self> {
        let d = AttackSpec::default();
        let model: AttackModel = s
            .value("attack", a.attack, d.model.to_string())?
            .parse()
            .map_err(|e: smvslab::Error| UsageError(e.to_string()))?;
        let spec = AttackSpec {
            model,
            wall_distance: s.value("wall-dist", a.wall_dist, d.wall_distance)?,
            layers: s.value("layers", a.layers, d.layers)?,
            seed,
            ..d
        };
        let x = s.optional("spoofer-x", a.spoofer_x)?;
        let y = s.optional("spoofer-y", a.spoofer_y)?;
        let position = match (x, y) {
            (Some(x), Some(y)) => Some((x, y)),
            (None, None) => None,
            _ => bail!(UsageError("--spoofer-x and --spoofer-y must be given together".into())),
        };
        let placement = s.optional_path("placement", a.placement)?;
        Ok(Self { spec, position, placement })
    }

    /// Explicit coordinates win, then a placement file, then `fallback`.
    fn spoofer(&self, fallback: Option<&PlacementResult>) -> Result<SpooferState> {
        if let Some((x, y)) = self.position {
            return Ok(SpooferState::at(x, y));
        }
        if let Some(p) = &self.placement {
            let file = if p.is_dir() { p.join(PLACEMENT_FILE) } else { p.clone() };
            let pt = PlacementResult::read_primary(file)?;
            return Ok(SpooferState::at(pt.x, pt.y));
        }
        match fallback {
            Some(r) => Ok(SpooferState::at(r.primary().x, r.primary().y)),
            None => bail!(UsageError("give --spoofer-x/--spoofer-y or --placement".into())),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_manifest(dir: &Path, kv: &KeyValues) -> Result<()> {
    ensure_dir(dir)?;
    kv.write(dir.join(MANIFEST_FILE))?;
    Ok(())
}

fn read_manifest(dir: &Path) -> Result<KeyValues> {
    let path = dir.join(MANIFEST_FILE);
    Ok(if path.exists() { KeyValues::read(path)? } else { KeyValues::new() })
}

fn load_dataset(dir: &Path) -> Result<(Dataset, Option<Trajectory>)> {
    let (ds, gt) = Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    if ds.is_empty() {
        bail!("{} contains no frames", dir.display());
    }
    Ok((ds, gt))
}

fn localize_priormap(ds: &Dataset, map_ds: &Dataset, map_gt: &Trajectory, init: &PoseSE3) -> Result<LocalizationRun> {
    let cfg = PipelineConfig::default().with_exec(EXEC);
    let map = build_prior_map(map_ds, map_gt, cfg.map_voxel)?;
    Ok(priormap_localize(ds, &map, init, &cfg)?)
}

fn write_run(dir: &Path, run: &LocalizationRun) -> Result<()> {
    ensure_dir(dir)?;
    run.trajectory.write_tum(dir.join(TRAJECTORY_FILE))?;
    let mut csv = String::from("frame,iterations,converged,correspondences,failure\n");
    for (i, f) in run.frames.iter().enumerate() {
        let failure = f.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(csv, "{i},{},{},{},{failure}", f.iterations, u8::from(f.converged), f.correspondences)?;
    }
    let path = dir.join(FRAMES_FILE);
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!("{} poses, {} frames fell back to the prediction", run.trajectory.len(), run.failures());
    Ok(())
}

fn write_placement(dir: &Path, result: &PlacementResult) -> Result<()> {
    ensure_dir(dir)?;
    result.write(dir)?;
    let p = result.primary();
    println!("spoofer at ({p:.3}, {:.3}) from {} intersections", p.y, result.kept.len(), p = p.x);
    Ok(())
}

fn run_attack(
    ds: &Dataset,
    gt: &Trajectory,
    input_manifest: &KeyValues,
    spec: &AttackSpec,
    spoofer: &SpooferState,
    out: &Path,
    run: &KeyValues,
) -> Result<Dataset> {
    let sensor = SensorModel::from_kv(input_manifest)?;
    let attacked = attack_dataset(ds, gt, spoofer, spec, &sensor, EXEC)?;
    let mut manifest = input_manifest.clone();
    manifest.merge(&attack_manifest(spec, spoofer));
    manifest.merge(run);
    attacked.save(out, Some(gt), Some(&manifest))?;
    let (before, after): (usize, usize) = ds.frames.iter().zip(&attacked.frames).fold((0, 0), |(a, b), (x, y)| (a + x.len(), b + y.len()));
    println!("{} attack: {before} -> {after} points", spec.model);
    Ok(attacked)
}

fn resolve_file(path: &Path, inside: &str) -> PathBuf {
    if path.is_dir() {
        path.join(inside)
    } else {
        path.to_path_buf()
    }
}

/// APE/RPE plus, when the reference is an attacked dataset, its attack keys.
fn evaluate(estimate: &Path, reference: &Path, delta: usize) -> Result<KeyValues> {
    let est = Trajectory::read_tum(resolve_file(estimate, TRAJECTORY_FILE))?;
    let reference_traj = Trajectory::read_tum(resolve_file(reference, GROUNDTRUTH_FILE))?;
    let a = ape(&est, &reference_traj, true, ApeMode::Timestamp)?;
    let r = rpe(&est, &reference_traj, delta)?;
    let mut kv = KeyValues::new();
    a.to_kv(&mut kv);
    r.to_kv(&mut kv);
    if reference.is_dir() {
        let m = read_manifest(reference)?;
        for (k, v) in m.iter().filter(|(k, _)| k.starts_with("attack.") || k.starts_with("spoofer.")) {
            kv.set(k, v);
        }
    }
    Ok(kv)
}

fn parse_edges(raw: Option<&str>) -> Result<Vec<f64>> {
    match raw {
        None => Ok(DEFAULT_BUCKET_EDGES.to_vec()),
        Some(list) => list
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| UsageError(format!("bad bucket edge {t:?}")).into()))
            .collect(),
    }
}

fn run_record(dir: &Path) -> Result<RunRecord> {
    let path = resolve_file(dir, METRICS_FILE);
    let kv = KeyValues::read(&path)?;
    let model: AttackModel = kv
        .parse_value("attack.model")?
        .with_context(|| format!("{} is not an attacked run (no attack.model)", path.display()))?;
    let coord = |k: &str| -> Result<f64> { kv.parse_value(k)?.with_context(|| format!("{} lacks {k}", path.display())) };
    let label = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string());
    Ok(RunRecord {
        label,
        model,
        spoofer: [coord("spoofer.x")?, coord("spoofer.y")?],
        ape: ApeStats::from_kv(&kv)?,
    })
}

fn report(profile: &SmvsProfile, runs: &[PathBuf], edges: &[f64], out: &Path) -> Result<()> {
    let records = runs.iter().map(|d| run_record(d)).collect::<Result<Vec<_>>>()?;
    let table = bucket_report(profile, &records, edges)?;
    ensure_dir(out)?;
    fs::write(out.join("buckets.csv"), table.to_csv())?;
    let mut csv = String::from("label,model,spoofer_x,spoofer_y,smvs,ape_rmse\n");
    for (r, smvs) in records.iter().zip(&table.run_smvs) {
        writeln!(csv, "{},{},{},{},{smvs},{}", r.label, r.model, r.spoofer[0], r.spoofer[1], r.ape.rmse)?;
    }
    fs::write(out.join("runs.csv"), csv)?;
    print!("{}", table.to_csv());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn full_pipeline(
    out: &Path,
    s: &mut Settings,
    seed: u64,
    scene: &SceneParams,
    smvs_cfg: &SmvsConfig,
    top_m: usize,
    standoff: f64,
    attack: &AttackParams,
    kind: PipelineKind,
) -> Result<()> {
    ensure_dir(out)?;
    // stage inputs are recorded relative to the output root so that trees
    // produced under different roots stay identical
    let (ds, gt, _) = scene.generate(seed, &out.join("dataset"), s.manifest())?;
    let cfg = PipelineConfig::default().with_exec(EXEC);
    let localize = |d: &Dataset| -> Result<LocalizationRun> {
        match kind {
            PipelineKind::Odometry => Ok(odometry_run(d, &cfg)?),
            PipelineKind::PriorMap => localize_priormap(d, &ds, &gt, &gt.poses()[0]),
        }
    };

    let benign = localize(&ds)?;
    write_run(&out.join("benign"), &benign)?;

    // the profile is placed in the world frame the spoofer lives in
    let est = &benign.trajectory;
    let anchor = gt.poses()[0].compose(&est.poses()[0].inverse());
    let profile = trajectory_smvs(&ds, &est.transformed(&anchor), smvs_cfg)?;
    ensure_dir(&out.join("smvs"))?;
    profile.write_csv(out.join("smvs").join(PROFILE_FILE))?;

    let placement = optimize_placement(&profile, top_m, standoff)?;
    write_placement(&out.join("placement"), &placement)?;

    let spoofer = attack.spoofer(Some(&placement))?;
    let dataset_manifest = read_manifest(&out.join("dataset"))?;
    let attacked = run_attack(&ds, &gt, &dataset_manifest, &attack.spec, &spoofer, &out.join("attacked"), s.manifest())?;
    let attacked_run = localize(&attacked)?;
    write_run(&out.join("attacked-run"), &attacked_run)?;

    for (name, run_dir, reference) in [("benign", "benign", "dataset"), ("attacked", "attacked-run", "attacked")] {
        let metrics = evaluate(&out.join(run_dir), &out.join(reference), 1)?;
        let dir = out.join("eval").join(name);
        ensure_dir(&dir)?;
        metrics.write(dir.join(METRICS_FILE))?;
        println!("{name}: APE rmse {} m", metrics.get("ape.rmse").unwrap_or("?"));
    }
    report(&profile, &[out.join("eval").join("attacked")], &DEFAULT_BUCKET_EDGES, &out.join("report"))?;
    s.note("spoofer.x", spoofer.position.x);
    s.note("spoofer.y", spoofer.position.y);
    write_manifest(out, s.manifest())
}
