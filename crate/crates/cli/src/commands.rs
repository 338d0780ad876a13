use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _, Result};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use p6d_core::align::{default_intrinsics, estimate_pose, CROP_PADDING};
use p6d_core::descriptor::{build_index, ffa_aggregate, list_bundles, DescriptorIndex, DescriptorMode, ObjectEntry, PatchGrid};
use p6d_core::fixtures::{synthetic_tracks, FixtureScene};
use p6d_core::geometry::{CameraIntrinsics, Pose, TriangleMesh};
use p6d_core::io::{
    read_json, to_canonical_string, write_canonical, AlignOutput, AlignRecord, GroundTruth, LoadedProposal, ProposalFile,
    ScaleRecord, SeedFile, Tensor, TrajectoryOutput,
};
use p6d_core::metrics::{
    chamfer, correct_origin, cou, projected_chamfer, rasterize_silhouette, track_depth_error, track_proj_error,
    track_rot_error, InstanceRow, MetricReport, SymmetrySet, Thresholds, TrackEvalConfig, VideoRow,
};
use p6d_core::retarget::{
    camera_to_robot, default_t_rc, forward_kinematics, inverse_kinematics_multistart, optimize_trajectory, relative_reference,
    KinematicChain, RetargetProblem, PANDA_READY,
};
use p6d_core::scale::{fuse_scales, lookup_metric_scale, relative_scale, ScaleDatabase, CONSTANT_SCALE_FALLBACK};
use p6d_core::track::{refine_trajectory, select_init_frame, seed_correspondences, CorrespondenceSet, TrackConfig, TrackFile};

use crate::{usage, Cli, Command, Context, FixtureCommand};

pub(crate) fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::BuildIndex {
            bundles,
            out,
            descriptor,
            views,
        } => {
            let mut extra = Vec::new();
            push_path(&mut extra, "paths.bundles", bundles);
            push_path(&mut extra, "paths.index", out);
            if let Some(d) = descriptor {
                extra.push(("descriptor".into(), json!(d)));
            }
            if let Some(v) = views {
                extra.push(("views".into(), json!(v)));
            }
            build_index_cmd(&Context::load(g, &extra)?)
        }
        Command::Retrieve {
            query,
            fg,
            index,
            k,
            out,
        } => {
            let mut extra = Vec::new();
            push_path(&mut extra, "paths.index", index);
            if let Some(k) = k {
                extra.push(("k_retrieval".into(), json!(k)));
            }
            let ctx = Context::load(g, &extra)?;
            let index = match index {
                Some(p) => p.clone(),
                None => ctx.path(&ctx.config.paths.index, "paths.index")?,
            };
            retrieve_cmd(&ctx, query, fg.as_deref(), &index, out.as_deref())
        }
        Command::Scale { proposals, out } => scale_cmd(&Context::load(g, &[])?, proposals, out.as_deref()),
        Command::Align {
            proposals,
            index,
            descriptor,
            out,
        } => {
            let mut extra = Vec::new();
            push_path(&mut extra, "paths.index", index);
            if let Some(d) = descriptor {
                extra.push(("descriptor".into(), json!(d)));
            }
            let ctx = Context::load(g, &extra)?;
            let index = match index {
                Some(p) => p.clone(),
                None => ctx.path(&ctx.config.paths.index, "paths.index")?,
            };
            align_cmd(&ctx, proposals, &index, out.as_deref())
        }
        Command::Track {
            poses,
            object,
            emit_seeds,
            seeds,
            tracks,
            out,
        } => {
            let ctx = Context::load(g, &[])?;
            match (poses, emit_seeds, seeds, tracks) {
                (Some(p), Some(e), None, _) => emit_seeds_cmd(&ctx, p, object.as_deref(), e),
                (_, None, Some(s), Some(t)) => track_cmd(&ctx, s, t, out.as_deref()),
                _ => Err(usage("track needs either --poses with --emit-seeds, or --seeds with --tracks")),
            }
        }
        Command::Retarget { trajectory, chain, out } => {
            let mut extra = Vec::new();
            push_path(&mut extra, "retarget.chain", chain);
            let ctx = Context::load(g, &extra)?;
            let chain = match chain {
                Some(c) => Some(c.clone()),
                None => ctx.config.retarget.chain.as_deref().map(|c| ctx.resolve(c)),
            };
            retarget_cmd(&ctx, trajectory, chain.as_deref(), out.as_deref())
        }
        Command::Eval {
            gt,
            poses,
            trajectory,
            out,
        } => {
            if poses.is_none() && trajectory.is_empty() {
                return Err(usage("eval needs --poses, --trajectory, or both"));
            }
            eval_cmd(&Context::load(g, &[])?, gt, poses.as_deref(), trajectory, out.as_deref())
        }
        Command::Fixtures(FixtureCommand::Scene { out, views }) => {
            let mut extra = Vec::new();
            if let Some(v) = views {
                extra.push(("views".into(), json!(v)));
            }
            let ctx = Context::load(g, &extra)?;
            let scene = FixtureScene::standard(ctx.config.views, ctx.config.seed)?;
            scene.write(out)?;
            println!("{}", to_canonical_string(&json!({"scene": out.display().to_string(), "views": ctx.config.views, "seed": ctx.config.seed}))?);
            Ok(())
        }
        Command::Fixtures(FixtureCommand::Tracks {
            gt,
            seeds,
            occlusion,
            noise,
            out,
        }) => {
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(0.0..1.0).contains(occlusion) || !(*noise >= 0.0) {
                return Err(usage("--occlusion must be in [0, 1) and --noise non-negative"));
            }
            fixture_tracks_cmd(&Context::load(g, &[])?, gt, seeds, *occlusion, *noise, out)
        }
    }
}

/// Flag paths are relative to the working directory, not the config.
fn push_path(extra: &mut Vec<(String, Value)>, key: &str, p: &Option<PathBuf>) {
    if let Some(p) = p {
        extra.push((key.into(), json!(absolute(p).display().to_string())));
    }
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

/// Canonical JSON to `out`, or to stdout.
fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            write_canonical(p, value)?;
        }
        None => println!("{}", to_canonical_string(value)?),
    }
    Ok(())
}

/// Bundles under the configured directory, keyed by object id, with the
/// bundle directory relative to the config directory.
fn load_entries(ctx: &Context) -> Result<BTreeMap<String, (ObjectEntry, String)>> {
    let root_rel = ctx
        .config
        .paths
        .bundles
        .clone()
        .ok_or_else(|| usage("no paths.bundles configured"))?;
    let root = ctx.resolve(&root_rel);
    let dirs = list_bundles(&root)?;
    let views = ctx.config.views;
    let entries: Vec<ObjectEntry> = dirs
        .par_iter()
        .map(|d| ObjectEntry::load(d, Some(views)))
        .collect::<p6d_core::Result<_>>()?;
    let mut out = BTreeMap::new();
    for (e, d) in entries.into_iter().zip(&dirs) {
        let name = d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let rel = Path::new(&root_rel).join(name).display().to_string();
        if let Some((_, other)) = out.insert(e.object_id.clone(), (e, rel.clone())) {
            return Err(p6d_core::Error::InvalidInput(format!("object id in both {other} and {rel}")).into());
        }
    }
    Ok(out)
}

fn build_index_cmd(ctx: &Context) -> Result<()> {
    let index_path = ctx.path(&ctx.config.paths.index, "paths.index")?;
    let entries = load_entries(ctx)?;
    let list: Vec<ObjectEntry> = entries.into_values().map(|(e, _)| e).collect();
    let index = build_index(&list, ctx.config.descriptor)?;
    if let Some(dir) = index_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    index.write(&index_path)?;
    emit(
        None,
        &json!({
            "config": ctx.echo(),
            "index": index_path.display().to_string(),
            "rows": index.len(),
            "dim": index.dim(),
            "objects": index.ids(),
        }),
    )
}

fn query_descriptor(query: &Path, fg: Option<&Path>) -> Result<Vec<f32>> {
    let t = Tensor::read(query)?;
    match t.shape().len() {
        1 => Ok(t.into_data()),
        3 => {
            let (rows, cols, dim) = (t.shape()[0], t.shape()[1], t.shape()[2]);
            let mask = match fg {
                Some(p) => {
                    let m = Tensor::read(p)?;
                    m.expect_shape(&[Some(rows), Some(cols)], p)?;
                    m.data().iter().map(|&v| v > 0.5).collect()
                }
                None => vec![true; rows * cols],
            };
            let grid = PatchGrid::new(rows, cols, dim, t.into_data(), mask)?;
            Ok(ffa_aggregate(std::iter::once(&grid))?)
        }
        _ => Err(p6d_core::Error::Format {
            path: query.display().to_string(),
            message: format!("query must be [dim] or [rows, cols, dim], got shape {:?}", t.shape()),
        }
        .into()),
    }
}

fn retrieve_cmd(ctx: &Context, query: &Path, fg: Option<&Path>, index: &Path, out: Option<&Path>) -> Result<()> {
    let index = DescriptorIndex::read(index)?;
    let q = query_descriptor(query, fg)?;
    let hits = index.retrieve(&q, ctx.config.k_retrieval)?;
    emit(out, &json!({"config": ctx.echo(), "hits": hits}))
}

struct Scene {
    k: CameraIntrinsics,
    proposals: Vec<LoadedProposal>,
}

fn load_scene(path: &Path) -> Result<Scene> {
    let file: ProposalFile = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let k = match file.intrinsics {
        Some(k) => {
            k.validate().map_err(|e| p6d_core::Error::Format {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            k
        }
        None => default_intrinsics(file.image_size[0], file.image_size[1])?,
    };
    let proposals = file
        .proposals
        .par_iter()
        .map(|p| p.load(base))
        .collect::<p6d_core::Result<Vec<_>>>()?;
    for p in &proposals {
        if let Some(d) = &p.depth {
            if (d.width(), d.height()) != (k.width, k.height) {
                return Err(p6d_core::Error::InvalidInput(format!(
                    "proposal {}: depth is {}x{}, image is {}x{}",
                    p.id,
                    d.width(),
                    d.height(),
                    k.width,
                    k.height
                ))
                .into());
            }
        }
    }
    Ok(Scene { k, proposals })
}

fn load_scale_db(ctx: &Context) -> Result<Option<ScaleDatabase>> {
    let p = &ctx.config.paths;
    match (&p.scale_db, &p.scale_db_embeddings) {
        (Some(a), Some(b)) => Ok(Some(ScaleDatabase::load(&ctx.resolve(a), &ctx.resolve(b))?)),
        (None, None) => Ok(None),
        _ => Err(usage("paths.scale_db and paths.scale_db_embeddings must be set together")),
    }
}

struct Scales {
    rho: Option<f64>,
    records: Vec<(ScaleRecord, Vec<String>)>,
}

/// Relative scale from depth, metric prior from the scale database, and the
/// scene-level fusion. Proposals left without a fused scale get the constant
/// fallback and a flag.
fn estimate_scales(ctx: &Context, scene: &Scene, db: Option<&ScaleDatabase>) -> Result<Scales> {
    let cfg = &ctx.config;
    let per: Vec<(Option<f64>, Option<f64>, Vec<String>)> = scene
        .proposals
        .par_iter()
        .map(|p| -> p6d_core::Result<_> {
            let mut flags = Vec::new();
            let r = match (&p.depth, &p.proposal.mask) {
                (Some(d), Some(m)) => match relative_scale(d, m, &scene.k, cfg.scale_mode) {
                    Ok(r) => Some(r),
                    Err(e) if e.is_numerical() => {
                        flags.push("degenerate_depth".to_string());
                        None
                    }
                    Err(e) => return Err(e),
                },
                (None, _) => {
                    flags.push("no_depth".to_string());
                    None
                }
                (_, None) => {
                    flags.push("no_mask".to_string());
                    None
                }
            };
            let m = match (&p.proposal.clip_embedding, db) {
                (Some(e), Some(db)) => Some(lookup_metric_scale(e, db, cfg.k_neighbors)?),
                _ => {
                    flags.push("no_metric_prior".to_string());
                    None
                }
            };
            Ok((r, m, flags))
        })
        .collect::<p6d_core::Result<_>>()?;
    let inputs: Vec<(String, f64, Option<f64>)> = scene
        .proposals
        .iter()
        .zip(&per)
        .filter_map(|(p, (r, m, _))| r.map(|r| (p.id.clone(), r, *m)))
        .collect();
    let fused = if inputs.iter().any(|(_, _, m)| m.is_some()) {
        Some(fuse_scales(&inputs)?)
    } else {
        None
    };
    let mut by_id: BTreeMap<&str, f64> = BTreeMap::new();
    if let Some((_, est)) = &fused {
        for e in est {
            by_id.insert(&e.object_id, e.s);
        }
    }
    let records = scene
        .proposals
        .iter()
        .zip(per)
        .map(|(p, (r, m, mut flags))| {
            let s = by_id.get(p.id.as_str()).copied().unwrap_or_else(|| {
                flags.push("constant_scale".to_string());
                CONSTANT_SCALE_FALLBACK
            });
            let rho_i = match (r, m) {
                (Some(r), Some(m)) => Some(m / r),
                _ => None,
            };
            (ScaleRecord { s, r, m, rho_i }, flags)
        })
        .collect();
    Ok(Scales {
        rho: fused.map(|(rho, _)| rho),
        records,
    })
}

#[derive(Serialize)]
struct ScaleRow {
    proposal: String,
    frame: usize,
    scale: ScaleRecord,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    flags: Vec<String>,
}

fn scale_cmd(ctx: &Context, proposals: &Path, out: Option<&Path>) -> Result<()> {
    let scene = load_scene(proposals)?;
    let db = load_scale_db(ctx)?;
    let scales = estimate_scales(ctx, &scene, db.as_ref())?;
    let rows: Vec<ScaleRow> = scene
        .proposals
        .iter()
        .zip(scales.records)
        .map(|(p, (scale, flags))| ScaleRow {
            proposal: p.id.clone(),
            frame: p.proposal.frame_index,
            scale,
            flags,
        })
        .collect();
    emit(out, &json!({"config": ctx.echo(), "rho": scales.rho, "results": rows}))
}

fn align_cmd(ctx: &Context, proposals: &Path, index_path: &Path, out: Option<&Path>) -> Result<()> {
    let scene = load_scene(proposals)?;
    let mut results = Vec::new();
    let mut rho = None;
    if !scene.proposals.is_empty() {
        let index = DescriptorIndex::read(index_path)?;
        let entries = load_entries(ctx)?;
        let db = load_scale_db(ctx)?;
        let scales = estimate_scales(ctx, &scene, db.as_ref())?;
        rho = scales.rho;
        let mode = ctx.config.descriptor;
        results = scene
            .proposals
            .par_iter()
            .zip(scales.records.into_par_iter())
            .map(|(p, (scale, flags))| -> Result<AlignRecord> {
                let q = match mode {
                    DescriptorMode::Ffa => ffa_aggregate(std::iter::once(&p.proposal.query_grid))?,
                    DescriptorMode::Cls => p
                        .cls
                        .clone()
                        .ok_or_else(|| p6d_core::Error::InvalidInput(format!("proposal {}: cls descriptor mode needs a cls token", p.id)))?,
                };
                let hit = index
                    .retrieve(&q, ctx.config.k_retrieval)
                    .with_context(|| format!("proposal {}", p.id))?
                    .into_iter()
                    .next()
                    .expect("non-empty index returns a hit");
                let (entry, dir) = entries.get(&hit.object_id).ok_or_else(|| {
                    p6d_core::Error::InvalidInput(format!("indexed object {:?} has no bundle", hit.object_id))
                })?;
                let r = estimate_pose(&p.proposal, entry, &scene.k, scale.s).with_context(|| format!("proposal {}", p.id))?;
                Ok(AlignRecord {
                    proposal: p.id.clone(),
                    frame: p.proposal.frame_index,
                    object_id: r.object_id,
                    retrieval_score: hit.score,
                    pose: r.pose,
                    view_index: r.view_index,
                    score: r.score,
                    mesh: entry.mesh_ref.as_ref().map(|m| Path::new(dir).join(m).display().to_string()),
                    mesh_scale: scale.s / entry.native_size,
                    scale,
                    flags,
                })
            })
            .collect::<Result<_>>()?;
    }
    emit(
        out,
        &AlignOutput {
            config: ctx.echo(),
            intrinsics: scene.k,
            crop_padding: CROP_PADDING,
            rho,
            results,
        },
    )
}

fn emit_seeds_cmd(ctx: &Context, poses: &Path, object: Option<&str>, out: &Path) -> Result<()> {
    let aligned: AlignOutput = read_json(poses)?;
    let candidates: Vec<&AlignRecord> = aligned
        .results
        .iter()
        .filter(|r| object.is_none_or(|o| r.object_id == o))
        .collect();
    let as_results: Vec<p6d_core::align::AlignmentResult> = candidates
        .iter()
        .map(|r| p6d_core::align::AlignmentResult {
            object_id: r.object_id.clone(),
            pose: r.pose,
            view_index: r.view_index,
            score: r.score,
        })
        .collect();
    let best = candidates[select_init_frame(&as_results).map_err(|_| {
        p6d_core::Error::InvalidInput(match object {
            Some(o) => format!("{}: no alignment of object {o:?}", poses.display()),
            None => format!("{}: no alignments", poses.display()),
        })
    })?];
    let mesh_rel = best
        .mesh
        .clone()
        .ok_or_else(|| p6d_core::Error::InvalidInput(format!("object {:?} has no mesh to seed from", best.object_id)))?;
    let mesh = TriangleMesh::load_obj(&ctx.resolve(&mesh_rel), best.mesh_scale)?;
    let (p3, p2) = seed_correspondences(&mesh, &best.pose, &aligned.intrinsics, ctx.config.track.seed_points, ctx.config.seed)?;
    emit(
        Some(out),
        &SeedFile {
            config: ctx.echo(),
            object_id: best.object_id.clone(),
            init_frame: best.frame,
            init_pose: best.pose,
            scale: best.scale.s,
            mesh: Some(mesh_rel),
            mesh_scale: best.mesh_scale,
            intrinsics: aligned.intrinsics,
            points3d: p3.iter().map(|p| [p.x, p.y, p.z]).collect(),
            points2d: p2.iter().map(|p| [p.x, p.y]).collect(),
        },
    )
}

fn track_cmd(ctx: &Context, seeds: &Path, tracks: &Path, out: Option<&Path>) -> Result<()> {
    let seed: SeedFile = read_json(seeds)?;
    let tracks = TrackFile::read(tracks)?;
    if tracks.n_points != seed.points3d.len() {
        return Err(p6d_core::Error::DimMismatch {
            expected: seed.points3d.len(),
            got: tracks.n_points,
        })
        .with_context(|| "tracks and seeds disagree on the point count");
    }
    let p3 = seed.points3d.iter().map(|p| Vector3::from(*p)).collect();
    let corr = CorrespondenceSet::from_track_file(p3, &tracks)?;
    let cfg = TrackConfig {
        pnp: ctx.config.pnp(),
        rms_gate_px: ctx.config.track.rms_gate_px,
    };
    let traj = refine_trajectory(&corr, &seed.intrinsics, &cfg)?;
    emit(
        out,
        &TrajectoryOutput {
            config: ctx.echo(),
            object_id: seed.object_id,
            scale: seed.scale,
            mesh: seed.mesh,
            mesh_scale: seed.mesh_scale,
            intrinsics: seed.intrinsics,
            frames: traj.frames,
        },
    )
}

const START_IK_ITERATIONS: usize = 500;
const START_IK_RESTARTS: usize = 32;
/// SE(3) log norm beyond which the start pose counts as out of reach.
const START_TOLERANCE: f64 = 1e-3;

fn retarget_cmd(ctx: &Context, trajectory: &Path, chain: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let traj: TrajectoryOutput = read_json(trajectory)?;
    let r = &ctx.config.retarget;
    let mut kin = match chain {
        Some(p) => KinematicChain::load(p)?,
        None => KinematicChain::panda(),
    };
    if let Some(g) = &r.grasp {
        kin = kin.with_grasp(g.to_pose()?);
    }
    let t_rc = r.t_rc.map(|p| p.to_pose()).transpose()?.unwrap_or_else(default_t_rc);
    let cam: Vec<Pose> = traj.frames.iter().map(|f| f.pose).collect();
    let robot = camera_to_robot(&cam, &t_rc);
    let start = match &r.start {
        Some(s) => s.to_pose()?,
        None => *robot.first().ok_or_else(|| p6d_core::Error::InvalidInput("empty trajectory".into()))?,
    };
    let targets = relative_reference(&robot, &start);
    // like the demonstrations, first bring the held object to the start pose
    let (q0, start_residual) = match &r.q0 {
        Some(q) => (q.clone(), (forward_kinematics(&kin, q).inverse() * start).log().norm()),
        None if kin.dof() == PANDA_READY.len() => inverse_kinematics_multistart(
            &kin,
            &start,
            &PANDA_READY,
            START_IK_ITERATIONS,
            START_IK_RESTARTS,
            START_TOLERANCE * 1e-3,
            ctx.config.seed,
        ),
        None => return Err(usage(format!("retarget.q0 is required for a {}-joint chain", kin.dof()))),
    };
    let mut flags = Vec::new();
    if start_residual > START_TOLERANCE {
        flags.push("start_unreachable");
        eprintln!(
            "warning: the start pose is {start_residual:.3} (SE(3) log norm) from the closest reachable pose; \
             set retarget.start or retarget.t_rc to place the object within reach"
        );
    }
    let problem = RetargetProblem {
        weights: r.weights,
        project_limits: r.project_limits,
        max_iterations: r.max_iterations,
        rel_tol: r.rel_tol,
        ..RetargetProblem::new(targets, r.dt, q0)
    };
    let solution = optimize_trajectory(&problem, &kin)?;
    emit(
        out,
        &json!({
            "config": ctx.echo(),
            "object_id": traj.object_id,
            "t_rc": t_rc,
            "start": start,
            "start_residual": start_residual,
            "flags": flags,
            "trajectory": solution,
        }),
    )
}

/// Worst-case row for an instance without a usable prediction.
fn missing_row(id: &str, flag: &str) -> InstanceRow {
    InstanceRow {
        id: id.to_string(),
        cou: 1.0,
        ch: f64::MAX,
        pch: f64::MAX,
        flags: vec![flag.to_string()],
    }
}

#[derive(Serialize)]
struct EvalOutput {
    config: Value,
    #[serde(flatten)]
    report: MetricReport,
}

fn eval_cmd(ctx: &Context, gt_path: &Path, poses: Option<&Path>, trajectories: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let gt = GroundTruth::read(gt_path)?;
    let gt_dir = gt_path.parent().unwrap_or(Path::new(""));
    let k_gt = gt.intrinsics;
    let (n, seed) = (ctx.config.eval.n_samples, ctx.config.seed);
    let mut gt_meshes = BTreeMap::new();
    for (id, o) in &gt.objects {
        gt_meshes.insert(id.clone(), TriangleMesh::load_obj(&gt_dir.join(&o.mesh), o.mesh_scale)?);
    }

    let mut instances = Vec::new();
    if let Some(p) = poses {
        let aligned: AlignOutput = read_json(p)?;
        let by_proposal: BTreeMap<&str, &AlignRecord> = aligned.results.iter().map(|r| (r.proposal.as_str(), r)).collect();
        instances = gt
            .instances
            .par_iter()
            .map(|inst| -> Result<InstanceRow> {
                let Some(rec) = by_proposal.get(inst.proposal.as_str()) else {
                    return Ok(missing_row(&inst.proposal, "missing"));
                };
                let Some(mesh_rel) = &rec.mesh else {
                    return Ok(missing_row(&inst.proposal, "no_mesh"));
                };
                let mesh_pred = TriangleMesh::load_obj(&ctx.resolve(mesh_rel), rec.mesh_scale)?;
                let mesh_gt = &gt_meshes[&inst.object_id];
                let mask_gt = rasterize_silhouette(mesh_gt, &inst.pose, &k_gt)?;
                let mask_pred = rasterize_silhouette(&mesh_pred, &rec.pose, &k_gt)?;
                let mut flags = Vec::new();
                if rec.object_id != inst.object_id {
                    flags.push(format!("retrieved {}", rec.object_id));
                }
                let pch = match projected_chamfer(mesh_gt, &inst.pose, &mesh_pred, &rec.pose, &k_gt, n, seed) {
                    Ok(v) => v,
                    Err(p6d_core::Error::BehindCamera(_)) => {
                        flags.push("behind_camera".into());
                        f64::MAX
                    }
                    Err(e) => return Err(e.into()),
                };
                Ok(InstanceRow {
                    id: inst.proposal.clone(),
                    cou: cou(&mask_gt, &mask_pred)?,
                    ch: chamfer(mesh_gt, &inst.pose, &mesh_pred, &rec.pose, n, seed)?,
                    pch,
                    flags,
                })
            })
            .collect::<Result<_>>()?;
    }

    let videos = trajectories
        .par_iter()
        .map(|path| -> Result<VideoRow> {
            let traj: TrajectoryOutput = read_json(path)?;
            let video = gt
                .videos
                .iter()
                .find(|v| v.object_id == traj.object_id)
                .ok_or_else(|| p6d_core::Error::InvalidInput(format!("no ground-truth video of {:?}", traj.object_id)))?;
            let gt_by_frame: BTreeMap<usize, Pose> =
                video.poses.iter().map(|r| Ok((r.frame, r.pose()?))).collect::<p6d_core::Result<_>>()?;
            let (pred, truth): (Vec<Pose>, Vec<Pose>) = traj
                .frames
                .iter()
                .filter_map(|f| gt_by_frame.get(&f.frame).map(|g| (f.pose, *g)))
                .unzip();
            let object = &gt.objects[&traj.object_id];
            let sym = match &object.symmetry {
                Some(s) => s.to_set()?,
                None => SymmetrySet::identity(),
            };
            let cfg = TrackEvalConfig::new(pred.len(), &k_gt, traj.scale, object.size)
                .with_context(|| format!("{}", path.display()))?;
            let rp: Vec<_> = pred.iter().map(|p| p.rotation).collect();
            let rg: Vec<_> = truth.iter().map(|p| p.rotation).collect();
            let tg: Vec<Vector3<f64>> = truth.iter().map(|p| p.translation).collect();
            let e_rot = track_rot_error(&rp, &rg, &sym, &cfg.gamma)?;
            let origin = correct_origin(&pred, &tg, traj.scale)?;
            let proj = track_proj_error(&origin.translations, &tg, &traj.intrinsics, &k_gt, &cfg)?;
            let e_depth = track_depth_error(&origin.translations, &tg, &cfg)?;
            Ok(VideoRow {
                id: traj.object_id.clone(),
                frames: pred.len(),
                e_rot_deg: e_rot,
                e_proj_pct: proj.percent,
                e_depth,
                origin_offset: origin.offset,
                origin_clamped: origin.clamped,
                skipped_frames: proj.skipped_frames,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let thresholds = ctx
        .config
        .eval
        .thresholds
        .clone()
        .unwrap_or_else(|| Thresholds::for_diagonal(k_gt.diagonal()));
    let report = MetricReport::new(thresholds, instances, videos)?;
    emit(out, &EvalOutput { config: ctx.echo(), report })
}

fn fixture_tracks_cmd(ctx: &Context, gt_path: &Path, seeds: &Path, occlusion: f64, noise: f64, out: &Path) -> Result<()> {
    let gt = GroundTruth::read(gt_path)?;
    let seed: SeedFile = read_json(seeds)?;
    let object = gt
        .objects
        .get(&seed.object_id)
        .ok_or_else(|| anyhow!("{}: no object {:?}", gt_path.display(), seed.object_id))?;
    let mesh = TriangleMesh::load_obj(&gt_path.parent().unwrap_or(Path::new("")).join(&object.mesh), object.mesh_scale)?;
    let video = gt
        .videos
        .iter()
        .find(|v| v.object_id == seed.object_id)
        .ok_or_else(|| anyhow!("{}: no video of {:?}", gt_path.display(), seed.object_id))?;
    let poses: Vec<Pose> = video.poses.iter().map(|r| r.pose()).collect::<p6d_core::Result<_>>()?;
    let p2: Vec<Vector2<f64>> = seed.points2d.iter().map(|p| Vector2::new(p[0], p[1])).collect();
    let tracks = synthetic_tracks(&mesh, &poses, seed.init_frame, &p2, &gt.intrinsics, occlusion, noise, ctx.config.seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    tracks.write(out)?;
    Ok(())
}
