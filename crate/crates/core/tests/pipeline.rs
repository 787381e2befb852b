use std::fs;
use std::path::Path;

use redraw_core::datasetgen::LABEL_FILE;
use redraw_core::imagemath::load_png;
use redraw_core::pipeline::*;
use redraw_core::styleenc::{format_embeddings, DesignEmbedding, EmbeddingRecord};
use redraw_core::{Error, Image};

fn toy(root: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.corpus_root = root.join("corpus");
    cfg.out_dir = root.join("out");
    cfg.synth.productions = 2;
    cfg.synth.designs = 2;
    cfg.synth.patches = 4;
    cfg.synth.patch_size = 16;
    cfg.synth.scene_frames = 2;
    cfg.synth.scene_frame_size = (48, 96);
    cfg.synth.scene_eye_box = (14, 10);
    let e = &mut cfg.encoder;
    e.arch.image_size = 16;
    e.arch.content_blocks = 2;
    e.arch.content_width = 4;
    e.arch.style_blocks = 2;
    e.arch.style_width = 4;
    e.arch.hidden = 8;
    e.steps = 30;
    e.batch = 4;
    e.context_size = 3;
    e.adam.lr = 3e-3;
    let r = &mut cfg.redrawer;
    r.arch.image_size = 16;
    r.arch.gen_width = 4;
    r.arch.gen_down = 2;
    r.arch.gen_res = 1;
    r.arch.style_blocks = 2;
    r.arch.style_width = 4;
    r.arch.disc_blocks = 2;
    r.arch.disc_width = 4;
    r.steps = 3;
    r.batch = 2;
    r.style_k = 2;
    cfg.eval.samples = 4;
    cfg
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_counts_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let s = cmd_synth(&toy(a.path())).unwrap();
    cmd_synth(&toy(b.path())).unwrap();
    assert_eq!((s.low, s.high, s.designs), (16, 16, 4));
    let index = fs::read_to_string(a.path().join("corpus").join(LABEL_FILE)).unwrap();
    assert_eq!(index.lines().count() - 1, 2 * 2 * 4 * 2);
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert!(ta.len() > 32);
    assert_eq!(ta, tb);
}

#[test]
fn synth_rejects_zero_designs_without_writing() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = toy(d.path());
    cfg.synth.designs = 0;
    let e = cmd_synth(&cfg).unwrap_err();
    assert!(matches!(e, Error::Validation(_)));
    assert_eq!(e.exit_code(), 1);
    assert!(read_tree(d.path()).is_empty());
}

#[test]
fn redrawer_stage_names_missing_encoder_weights() {
    let d = tempfile::tempdir().unwrap();
    let cfg = toy(d.path());
    cmd_synth(&cfg).unwrap();
    let e = cmd_train_redrawer(&cfg).unwrap_err();
    assert!(e.to_string().contains("encoder.weights"), "{e}");
    assert_eq!(e.exit_code(), 2);
    assert!(!cfg.out_dir.exists());
}

fn record(id: &str, design: Option<&str>, hot: usize) -> EmbeddingRecord {
    let mut v = [0.0; 32];
    v[hot] = 1.0;
    EmbeddingRecord { id: id.into(), production: "p".into(), design: design.map(Into::into), embedding: DesignEmbedding(v) }
}

#[test]
fn cluster_one_hot_embeddings_are_pure() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = toy(d.path());
    let path = d.path().join("emb.tsv");
    let recs: Vec<_> = (0..9).map(|i| record(&format!("{i}"), Some(["a", "b", "c"][i % 3]), i % 3)).collect();
    fs::write(&path, format_embeddings(&recs)).unwrap();
    cfg.cluster.embeddings = Some(path);
    let r = cmd_cluster(&cfg).unwrap();
    assert_eq!(r.clusters, 3);
    assert_eq!(r.purity, Some(1.0));
    assert_eq!(r.separation_ratio, Some(0.0));
    let report = fs::read_to_string(cfg.out_dir.join(files::CLUSTER_REPORT)).unwrap();
    assert!(report.contains("purity\t1\n"));
}

#[test]
fn cluster_single_embedding_reports_unavailable_ratio() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = toy(d.path());
    let path = d.path().join("emb.tsv");
    fs::write(&path, format_embeddings(&[record("0", Some("a"), 0)])).unwrap();
    cfg.cluster.embeddings = Some(path);
    let r = cmd_cluster(&cfg).unwrap();
    assert_eq!(r.clusters, 1);
    assert_eq!(r.separation_ratio, None);
    let report = fs::read_to_string(cfg.out_dir.join(files::CLUSTER_REPORT)).unwrap();
    assert!(report.contains("separation_ratio\tunavailable"));
}

#[test]
fn cluster_rejects_malformed_embeddings() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = toy(d.path());
    let path = d.path().join("emb.tsv");
    fs::write(&path, "id\tproduction\tdesign\n0\tp\ta\t1.0\n").unwrap();
    cfg.cluster.embeddings = Some(path);
    assert!(matches!(cmd_cluster(&cfg).unwrap_err(), Error::Format { line: 2, .. }));
    assert!(!cfg.out_dir.exists());
}

/// Runs synth and both training stages into `root`.
fn trained(root: &Path) -> RunConfig {
    let cfg = toy(root);
    cmd_synth(&cfg).unwrap();
    cmd_train_encoder(&cfg).unwrap();
    cmd_train_redrawer(&cfg).unwrap();
    cfg
}

#[test]
fn full_run_is_deterministic_and_blends_only_inside_masks() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = trained(a.path());
    let cfg_b = trained(b.path());

    let log = fs::read_to_string(cfg.out_dir.join(files::ENCODER_LOG)).unwrap();
    let losses: Vec<f64> = log.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 30);
    let k = 5;
    let head: f64 = losses[..k].iter().sum();
    let tail: f64 = losses[losses.len() - k..].iter().sum();
    assert!(tail < head, "encoder loss did not fall: {head} -> {tail}");

    let summary = cmd_redraw(&cfg).unwrap();
    cmd_redraw(&cfg_b).unwrap();
    assert_eq!(summary.frames, 2);
    assert_eq!(summary.redrawn(), 4);
    cmd_eval(&cfg).unwrap();
    cmd_eval(&cfg_b).unwrap();
    cmd_cluster(&cfg).unwrap();
    cmd_cluster(&cfg_b).unwrap();
    // config.toml records the (different) temporary paths.
    let strip = |t: Vec<(String, Vec<u8>)>| t.into_iter().filter(|(n, _)| !n.ends_with("config.toml")).collect::<Vec<_>>();
    let (ta, tb) = (strip(read_tree(a.path())), strip(read_tree(b.path())));
    assert_eq!(ta.len(), tb.len());
    for ((na, da), (nb, db)) in ta.iter().zip(&tb) {
        assert_eq!(na, nb);
        assert!(da == db, "{na} differs between runs");
    }

    let frames_dir = cfg.corpus_root.join("scene").join("frames");
    for (i, name) in ["frame000.png", "frame001.png"].iter().enumerate() {
        let input: Image = load_png(&frames_dir.join(name)).unwrap();
        let output: Image = load_png(&cfg.out_dir.join(files::REDRAW_DIR).join(name)).unwrap();
        let (h, w) = (input.height(), input.width());
        let mut inside = vec![false; h * w];
        for (src, mask) in &summary.masks[i] {
            for y in 0..src.h {
                for x in 0..src.w {
                    if mask.get(y, x) > 0.0 {
                        inside[(src.y + y) * w + src.x + x] = true;
                    }
                }
            }
        }
        let mut changed_inside = 0;
        for y in 0..h {
            for x in 0..w {
                if inside[y * w + x] {
                    changed_inside += usize::from(input.pixel(y, x) != output.pixel(y, x));
                } else {
                    assert_eq!(input.pixel(y, x), output.pixel(y, x), "{name} ({y}, {x}) changed outside the masks");
                }
            }
        }
        assert!(changed_inside > 0, "{name}: nothing redrawn");
    }
}

#[test]
fn redraw_with_no_regions_copies_frames() {
    let d = tempfile::tempdir().unwrap();
    let cfg = toy(d.path());
    cmd_synth(&cfg).unwrap();
    // Weights only need to exist and match; an untrained store will do.
    let (_, w) = redraw_core::translator::Generator::new(&cfg.redrawer.arch, cfg.seed).unwrap();
    w.save(&cfg.out_dir.join(files::GENERATOR_WEIGHTS)).unwrap();
    let scene = cfg.corpus_root.join("scene");
    fs::write(scene.join(files::SCENE_MANIFEST), "frame,x,y,w,h,kind,production,design\n").unwrap();
    let s = cmd_redraw(&cfg).unwrap();
    assert_eq!((s.frames, s.outcomes.len()), (2, 0));
    for name in ["frame000.png", "frame001.png"] {
        let a: Image = load_png(&scene.join("frames").join(name)).unwrap();
        let b: Image = load_png(&cfg.out_dir.join(files::REDRAW_DIR).join(name)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn redraw_skips_regions_without_a_guide_crop() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = toy(d.path());
    cmd_synth(&cfg).unwrap();
    let (_, w) = redraw_core::translator::Generator::new(&cfg.redrawer.arch, cfg.seed).unwrap();
    w.save(&cfg.out_dir.join(files::GENERATOR_WEIGHTS)).unwrap();
    let scene = cfg.corpus_root.join("scene");
    let manifest = fs::read_to_string(scene.join(files::SCENE_MANIFEST)).unwrap();
    let designs: Vec<String> = manifest.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_string()).collect();
    for d in &designs {
        cfg.redraw.pairings.insert(d.clone(), "nowhere".into());
    }
    let s = cmd_redraw(&cfg).unwrap();
    assert_eq!(s.redrawn(), 0);
    assert!(s.outcomes.iter().all(|o| o.note.starts_with("skipped")));
    let a: Image = load_png(&scene.join("frames").join("frame000.png")).unwrap();
    let b: Image = load_png(&cfg.out_dir.join(files::REDRAW_DIR).join("frame000.png")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn redraw_reports_missing_weights_as_io() {
    let d = tempfile::tempdir().unwrap();
    let cfg = toy(d.path());
    cmd_synth(&cfg).unwrap();
    let e = cmd_redraw(&cfg).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("generator.weights"));
}
