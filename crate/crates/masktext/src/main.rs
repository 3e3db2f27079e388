use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use masktext::commands::{self, GtSource, InspectKind};
use masktext::core::loss::{ContrastiveConfig, LossWeights};
use masktext::Error;

/// Mask-text pair generation, caption merging, dataset statistics and
/// evaluation for 3D scenes.
#[derive(Debug, Parser)]
#[command(name = "masktext", version)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress the summary line on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lift per-frame 2D masks to 3D mask-text pairs.
    Fuse {
        #[arg(long)]
        manifest: PathBuf,
        /// Depth-consistency tolerance in meters.
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Process every k-th frame of the manifest.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach pair captions to class-agnostic 3D proposals.
    Merge {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        proposals: PathBuf,
        /// Point count of the scene; inferred from the largest index if absent.
        #[arg(long)]
        n_points: Option<u32>,
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        #[arg(long, default_value_t = 8)]
        max_captions: usize,
        /// Shuffle captions before truncation to --max-captions.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coverage, mask entropy and caption vocabulary statistics.
    Stats {
        /// Pairs file of one scene; repeat for several scenes.
        #[arg(long = "pairs", required = true)]
        pairs: Vec<PathBuf>,
        /// Point cloud of each scene, in the same order as --pairs.
        #[arg(long = "pointcloud", required = true)]
        pointclouds: Vec<PathBuf>,
        /// Report entropy values multiplied by 100.
        #[arg(long)]
        entropy_x100: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Foreground mIoU / mAcc of open-vocabulary semantic predictions.
    EvalSem {
        /// Per-point features (MSEMB001).
        #[arg(long)]
        point_feats: PathBuf,
        /// Class text embeddings (MSEMB001), one row per label-set class.
        #[arg(long)]
        class_emb: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// PLY with a semantic_id property.
        #[arg(long)]
        gt_pointcloud: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Instance segmentation AP.
    EvalInst {
        /// JSONL of {point_indices, score, semantic_id}.
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        gt: GtArgs,
        /// Point count, required with --gt.
        #[arg(long, requires = "gt")]
        n_points: Option<u32>,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the training losses on a JSON fixture.
    Loss {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        lambda_obj: f64,
        #[arg(long, default_value_t = 5.0)]
        lambda_dice: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda_bce: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_cap: f64,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Use raw embeddings instead of L2-normalized ones.
        #[arg(long)]
        no_normalize: bool,
        /// Do not divide the denominator logits by the temperature.
        #[arg(long)]
        literal_denominator: bool,
        /// Average over all positive terms instead of per mask.
        #[arg(long)]
        pooled_mean: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load and validate a single input file, printing a summary.
    Inspect {
        #[arg(long, value_enum)]
        kind: Kind,
        path: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct GtArgs {
    /// JSONL of {point_indices, semantic_id}.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// PLY with instance_id and semantic_id properties.
    #[arg(long)]
    gt_pointcloud: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Ply,
    Depth,
    Emb,
    Masks,
}

fn run(command: Command) -> Result<String, Error> {
    Ok(match command {
        Command::Fuse { manifest, epsilon, stride, out } => {
            let r = commands::run_fuse(&commands::FuseOptions { manifest, epsilon, stride, out })?;
            format!(
                "scene {}: {} frames, {} masks, {} pairs, {} empty regions skipped",
                r.scene_id, r.frames_processed, r.masks_in, r.pairs_out, r.empty_regions_skipped
            )
        }
        Command::Merge { pairs, proposals, n_points, iou_threshold, max_captions, seed, out } => {
            let opts = commands::MergeOptions { pairs, proposals, n_points, iou_threshold, max_captions, seed, out };
            let r = commands::run_merge(&opts)?;
            format!("{} proposals captioned, {} pairs assigned, {} unassigned", r.merged_out, r.assigned, r.unassigned)
        }
        Command::Stats { pairs, pointclouds, entropy_x100, out } => {
            let r = commands::run_stats(&commands::StatsOptions { pairs, pointclouds, entropy_x100, out })?;
            format!(
                "{} scenes, mean coverage {:.2}%, {} unique tokens",
                r.scenes.len(),
                r.mean_coverage_pct,
                r.captions.unique_normalized_tokens
            )
        }
        Command::EvalSem { point_feats, class_emb, labels, gt_pointcloud, out } => {
            let r = commands::run_eval_sem(&commands::EvalSemOptions { point_feats, class_emb, labels, gt_pointcloud, out })?;
            format!("f-mIoU {:.2}, f-mAcc {:.2}", r.f_miou, r.f_macc)
        }
        Command::EvalInst { pred, gt, n_points, labels, out } => {
            let gt = match (gt.gt, gt.gt_pointcloud) {
                (Some(path), _) => {
                    let n_points = n_points.ok_or_else(|| Error::Contract("--gt needs --n-points".into()))?;
                    GtSource::Records { path, n_points }
                }
                (None, Some(path)) => GtSource::PointCloud(path),
                (None, None) => unreachable!("clap enforces the group"),
            };
            let r = commands::run_eval_inst(&commands::EvalInstOptions { pred, gt, labels, out })?;
            format!("mAP {:.4}, AP50 {:.4}, AP25 {:.4}", r.map, r.ap50, r.ap25)
        }
        Command::Loss {
            input,
            lambda_obj,
            lambda_dice,
            lambda_bce,
            lambda_cap,
            temperature,
            no_normalize,
            literal_denominator,
            pooled_mean,
            out,
        } => {
            let weights = LossWeights { lambda_obj, lambda_dice, lambda_bce, lambda_cap };
            let contrastive = ContrastiveConfig {
                temperature,
                normalize_embeddings: !no_normalize,
                per_mask_mean: !pooled_mean,
                formula_literal_denominator: literal_denominator,
            };
            let r = commands::run_loss(&commands::LossOptions { input, weights, contrastive, out })?;
            format!("total {:.6} (obj {:.6}, dice {:.6}, bce {:.6}, cap {:.6})", r.total, r.obj, r.dice, r.bce, r.cap)
        }
        Command::Inspect { kind, path } => {
            let kind = match kind {
                Kind::Ply => InspectKind::Ply,
                Kind::Depth => InspectKind::Depth,
                Kind::Emb => InspectKind::Emb,
                Kind::Masks => InspectKind::Masks,
            };
            let summary = commands::inspect(kind, &path)?;
            println!("{summary}");
            String::new()
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    let quiet = cli.quiet;
    match pool.install(|| run(cli.command)) {
        Ok(summary) => {
            if !quiet && !summary.is_empty() {
                eprintln!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
