use std::path::Path;
use std::time::Instant;

use fsd_core::boxmetrics::{evaluate, group_by_image, read_records, write_records};
use fsd_core::config::{parse_size, RunConfig};
use fsd_core::dataingest::{
    extract_videos, list_videos, load_manifest, load_samples, save_manifest, split_manifest,
    synth_transparent_with_contrast, Manifest, Split,
};
use fsd_core::detector::{loss_trend, model_stats, trace_csv, train_with_progress, Checkpoint, Detector};
use fsd_core::evalharness::{
    ablate, cam, config_digest, format_table, report, run_dir, run_inference, write_report, write_repro, ImageSet,
    RunRecord, Variant,
};
use fsd_core::util::write_atomic;
use fsd_core::{Category, Error, Result};

use crate::{Cli, Command};

fn prepare_out(dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    write_repro(dir, &cfg.digest(), cfg.seed)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

pub fn run(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Ingest { videos, name } => {
            prepare_out(out, cfg)?;
            let list = list_videos(videos)?;
            let records = extract_videos(&list, cfg.ingest.frame_budget, cfg.seed, out)?;
            let mut all = Manifest::new(name.clone(), Split::All, records);
            all.base_dir = out.to_path_buf();
            let (train, test) = split_manifest(&all, cfg.ingest.train_fraction, cfg.seed)?;
            save_manifest(&all, &out.join("all.manifest"))?;
            save_manifest(&train, &out.join("train.manifest"))?;
            save_manifest(&test, &out.join("test.manifest"))?;
            println!(
                "{} videos -> {} frames (train {}, test {})",
                list.len(),
                all.records.len(),
                train.records.len(),
                test.records.len()
            );
        }
        Command::Synth { name, split } => {
            prepare_out(out, cfg)?;
            let (m, contrast) = synth_transparent_with_contrast(&cfg.synth, out, name)?;
            save_manifest(&m, &out.join(format!("{name}.manifest")))?;
            let objects: usize = m.records.iter().map(|r| r.annotations.len()).sum();
            println!("{} images, {objects} objects, mean foreground contrast {contrast:.3}", m.records.len());
            if *split {
                let (train, test) = split_manifest(&m, cfg.ingest.train_fraction, cfg.seed)?;
                save_manifest(&train, &out.join(format!("{name}-train.manifest")))?;
                save_manifest(&test, &out.join(format!("{name}-test.manifest")))?;
                println!("train {}, test {}", train.records.len(), test.records.len());
            }
        }
        Command::Train { manifest } => {
            let m = load_manifest(manifest)?;
            prepare_out(out, cfg)?;
            let samples: Vec<_> = load_samples(&m, &cfg.detector)?.into_iter().map(|s| s.0).collect();
            let every = (cfg.train.steps / 20).max(1);
            let outcome = train_with_progress(&samples, &cfg.detector, &cfg.train, cfg.seed, |r| {
                if r.step % every == 0 || r.step + 1 == cfg.train.steps {
                    eprintln!("step {:>6}  loss {:.4} (cls {:.4} reg {:.4} ctr {:.4})", r.step, r.total, r.cls, r.reg, r.ctr);
                }
            })?;
            outcome.checkpoint.save(&out.join("checkpoint.fsd"))?;
            write_text(&out.join("loss.csv"), &trace_csv(&outcome.trace))?;
            let window = (cfg.train.steps / 10).clamp(1, 50);
            let trend = loss_trend(&outcome.trace, window).expect("non-empty trace");
            let summary = format!(
                "steps {}\nloss first {window} steps {:.6}\nloss last {window} steps {:.6}\nratio {:.4}\ntrend {}\ncheckpoint {}\n",
                cfg.train.steps,
                trend.initial,
                trend.last,
                trend.ratio(),
                if trend.decreasing() { "decreasing" } else { "not decreasing" },
                outcome.checkpoint.digest()
            );
            write_text(&out.join("summary.txt"), &summary)?;
            print!("{summary}");
        }
        Command::Eval { checkpoint, manifest } => {
            let started = Instant::now();
            let ckpt = Checkpoint::load(checkpoint)?;
            let m = load_manifest(manifest)?;
            let store = run_inference(&ckpt, &m, &cfg.detector)?;
            let digest = config_digest(&cfg.detector, &ckpt)?;
            let dir = run_dir(out, &digest, cfg.seed);
            prepare_out(&dir, cfg)?;
            write_records(&dir.join("detections.txt"), &store)?;
            let rep = report(&store, &m, cfg.eval.weights()?, cfg.eval.iou_threshold)?;
            let model_id = ckpt.digest()[..12].to_string();
            write_report(&dir, &model_id, &rep)?;
            let record = RunRecord {
                model_id: model_id.clone(),
                dataset_name: m.name.clone(),
                seed: cfg.seed,
                config_digest: digest,
                store: dir.join("detections.txt"),
                wall_time_s: started.elapsed().as_secs_f64(),
            };
            record.write(&dir)?;
            print!("{}", format_table(&[(model_id.as_str(), &rep)]));
            println!("run directory {}", dir.display());
        }
        Command::Ablate { train, test, seeds } => {
            let seeds = seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
            if seeds.is_empty() {
                return Err(Error::Config("--seeds needs at least one seed".into()));
            }
            let train_set = ImageSet::from_manifest(&load_manifest(train)?)?;
            let test_set = ImageSet::from_manifest(&load_manifest(test)?)?;
            prepare_out(out, cfg)?;
            let variants = [Variant::atdh(), Variant::baseline()];
            let table = ablate(
                &train_set,
                &test_set,
                &cfg.detector,
                &cfg.train,
                &variants,
                &seeds,
                cfg.eval.iou_threshold,
                |v, seed, run| match run {
                    Some(r) => eprintln!("{} seed {seed}: mAP {:.1}", v.label, 100.0 * r.map),
                    None => eprintln!("{} seed {seed}: diverged", v.label),
                },
            )?;
            write_text(&out.join("ablation.txt"), &table.to_text())?;
            write_text(&out.join("ablation.jsonl"), &table.to_jsonl()?)?;
            print!("{}", table.to_text());
        }
        Command::Bi { pred, gt, gt_manifest, .. } => {
            let dets = read_records(pred)?;
            let gts = if *gt_manifest {
                load_manifest(gt)?.ground_truth()
            } else {
                group_by_image(read_records(gt)?)
            };
            let weights = cfg.eval.weights()?;
            let rep = evaluate(&group_by_image(dets), &gts, cfg.eval.iou_threshold, weights)?;
            prepare_out(out, cfg)?;
            let value = rep.avg_bi.map_or_else(|| "n/a".to_string(), |b| format!("{b:.9}"));
            let text = format!(
                "w1 {}\nw2 {}\nmatched_pairs {}\navg_bi {value}\n",
                weights.area_weight(),
                weights.iou_weight(),
                rep.matched_pairs
            );
            write_text(&out.join("bi.txt"), &text)?;
            print!("{text}");
        }
        Command::Cam {
            checkpoint,
            image,
            classes,
            level,
            overlay,
        } => {
            let classes: Vec<Category> = if classes.is_empty() {
                Category::ALL.to_vec()
            } else {
                classes.iter().map(|c| c.parse()).collect::<Result<_>>()?
            };
            let ckpt = Checkpoint::load(checkpoint)?;
            let img = fsd_core::dataingest::open_rgb(image)?;
            prepare_out(out, cfg)?;
            let stem = image.file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned());
            for c in classes {
                let res = cam(&ckpt, &img, c, *level)?;
                let kind = if *overlay { "overlay" } else { "cam" };
                let path = out.join(format!("{stem}-{c}-{kind}.png"));
                res.write_png(&path, *overlay)?;
                println!("{}", path.display());
            }
        }
        Command::Stats { sizes } => {
            let sizes = if sizes.is_empty() {
                vec![cfg.detector.input_size]
            } else {
                sizes.iter().map(|s| parse_size(s)).collect::<Result<_>>()?
            };
            let params = Detector::new(&cfg.detector)?.init_params(cfg.seed)?;
            let stats = model_stats(&cfg.detector, &params, &sizes)?;
            prepare_out(out, cfg)?;
            let mut text = format!("parameters {} ({:.4} M)\n", stats.param_count, stats.params_millions());
            for ((h, w), m) in &stats.mult_adds {
                text.push_str(&format!("mult_adds {h}x{w} {m} ({:.4} G)\n", *m as f64 / 1e9));
            }
            write_text(&out.join("stats.txt"), &text)?;
            print!("{text}");
        }
    }
    Ok(())
}
