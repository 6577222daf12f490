use std::fs;
use std::path::Path;
use std::process::Command;

use dipole::datasets::{read_rows, swiss_roll, write_cloud, write_distance};
use dipole::geometry::euclidean_distances;
use dipole::isomap::isomap_embed;
use dipole::{DatasetSpec, DipoleConfig, EvaluationParams};
use dipole_cli::{cmd_embed, cmd_evaluate, cmd_grid, emit_svg, EmbedParams, GridSpec, PlotOptions, RunManifest};
use quick_xml::events::Event;
use quick_xml::Reader;
use tempfile::tempdir;

fn small_params(steps: usize, alpha: f64) -> EmbedParams {
    EmbedParams {
        dataset: DatasetSpec::SwissRollHole { n: 120, noise: 0.0, seed: 3 },
        m1: 8,
        connect: true,
        dim: 2,
        config: DipoleConfig { alpha, k: 16, lr: 0.1, steps, seed: 3, ..DipoleConfig::default() },
        evaluation: EvaluationParams { ijk_samples: 2000, ijk_seed: 3, fps_size: 48, fps_seed: 3 },
    }
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    read_rows(fs::File::open(path).unwrap()).unwrap()
}

fn dipole_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dipole"))
}

#[test]
fn embed_writes_all_artifacts() {
    let dir = tempdir().unwrap();
    let plot = PlotOptions { svg: true, color: None };
    cmd_embed(&small_params(20, 0.1), &plot, None, dir.path()).unwrap();
    for name in ["embedding.csv", "trace.csv", "metrics.json", "manifest.json", "embedding.svg"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    assert_eq!(rows(&dir.path().join("embedding.csv")).len(), 120);
    assert_eq!(rows(&dir.path().join("trace.csv")).len(), 20);
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn zero_steps_emit_the_isomap_initialization() {
    let dir = tempdir().unwrap();
    let params = small_params(0, 0.1);
    cmd_embed(&params, &PlotOptions::default(), None, dir.path()).unwrap();
    let DatasetSpec::SwissRollHole { n, noise, seed } = params.dataset else { unreachable!() };
    let cloud = dipole::datasets::swiss_roll_hole(n, noise, seed).unwrap().cloud;
    let target = dipole_cli::target_metric(&dipole::Dataset::Cloud(cloud), params.m1, true).unwrap();
    let expected = isomap_embed(&target, 2).unwrap().mean_centered();
    let got: Vec<f64> = rows(&dir.path().join("embedding.csv")).concat();
    assert_eq!(got, expected.coords());
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let (first, second) = (tempdir().unwrap(), tempdir().unwrap());
    cmd_embed(&small_params(15, 0.1), &PlotOptions::default(), None, first.path()).unwrap();
    let manifest = RunManifest::load(first.path().join("manifest.json")).unwrap();
    cmd_embed(&manifest.params, &manifest.plot, manifest.threads, second.path()).unwrap();
    for name in ["embedding.csv", "metrics.json", "trace.csv"] {
        assert_eq!(fs::read(first.path().join(name)).unwrap(), fs::read(second.path().join(name)).unwrap());
    }
    let status = dipole_bin()
        .args(["embed", "--manifest"])
        .arg(first.path().join("manifest.json"))
        .arg("--out")
        .arg(second.path().join("replay"))
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(first.path().join("embedding.csv")).unwrap(),
        fs::read(second.path().join("replay/embedding.csv")).unwrap()
    );
}

#[test]
fn thread_cap_does_not_change_results() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let mut params = small_params(10, 0.1);
    params.config.batch_size = 3;
    cmd_embed(&params, &PlotOptions::default(), None, a.path()).unwrap();
    cmd_embed(&params, &PlotOptions::default(), Some(1), b.path()).unwrap();
    assert_eq!(fs::read(a.path().join("embedding.csv")).unwrap(), fs::read(b.path().join("embedding.csv")).unwrap());
}

#[test]
fn evaluate_exact_realization_scores_zero() {
    let dir = tempdir().unwrap();
    let roll = swiss_roll(40, 0.0, 1).unwrap();
    let flat: Vec<f64> = roll.params.iter().flat_map(|&[t, h]| [t, h]).collect();
    let plane = dipole::PointCloud::new(40, 2, flat).unwrap();
    let dist_path = dir.path().join("dist.csv");
    write_distance(fs::File::create(&dist_path).unwrap(), &euclidean_distances(&plane)).unwrap();
    let emb_path = dir.path().join("emb.csv");
    write_cloud(fs::File::create(&emb_path).unwrap(), &plane).unwrap();
    let params = EvaluationParams { ijk_samples: 5000, ijk_seed: 1, fps_size: 20, fps_seed: 1 };
    let spec = DatasetSpec::CsvDistance { path: dist_path };
    let report = cmd_evaluate(&spec, 5, false, &emb_path, &params, None).unwrap();
    assert_eq!(report.ijk_score, 0.0);
    assert!(report.residual_variance < 1e-12);
    assert!(report.ph0_score < 1e-9 && report.ph1_score < 1e-9);
}

#[test]
fn evaluate_is_byte_stable_and_checks_shapes() {
    let dir = tempdir().unwrap();
    cmd_embed(&small_params(5, 0.1), &PlotOptions::default(), None, dir.path()).unwrap();
    let run = |out: &str| {
        dipole_bin()
            .args(["evaluate", "--dataset", "swiss-roll-hole", "--n", "120", "--m1", "8", "--connect"])
            .args(["--seed", "3", "--ijk-samples", "500", "--fps-size", "32", "--embedding"])
            .arg(dir.path().join("embedding.csv"))
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap()
    };
    assert!(run("a").success() && run("b").success());
    assert_eq!(
        fs::read(dir.path().join("a/metrics.json")).unwrap(),
        fs::read(dir.path().join("b/metrics.json")).unwrap()
    );
    let status = dipole_bin()
        .args(["evaluate", "--dataset", "circle", "--n", "50", "--embedding"])
        .arg(dir.path().join("embedding.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("out");
    let code = |args: &[&str]| dipole_bin().args(args).arg("--out").arg(&out).status().unwrap().code();
    // missing required flag
    assert_eq!(code(&["embed", "--dataset", "circle", "--seed", "1"]), Some(1));
    // alpha out of range
    assert_eq!(
        code(&["embed", "--dataset", "circle", "--n", "30", "--dim", "2", "--seed", "1", "--alpha", "2"]),
        Some(1)
    );
    // disconnected neighbor graph without --connect
    let two = dir.path().join("two.csv");
    fs::write(&two, "0,0\n0,1\n1,0\n100,100\n100,101\n101,100\n").unwrap();
    let cloud = two.to_str().unwrap();
    assert_eq!(
        code(&["embed", "--cloud", cloud, "--m1", "2", "--dim", "2", "--seed", "1", "--k", "4", "--m2", "2"]),
        Some(1)
    );
    // constant distances give an embedding with zero distance variance
    let flat = dir.path().join("flat.csv");
    fs::write(&flat, "0,0,0\n0,0,0\n0,0,0\n").unwrap();
    let args = [
        "embed",
        "--distance",
        flat.to_str().unwrap(),
        "--dim",
        "1",
        "--seed",
        "1",
        "--k",
        "3",
        "--m2",
        "1",
        "--steps",
        "0",
    ];
    assert_eq!(code(&args), Some(2));
    assert_eq!(
        code(&["embed", "--dataset", "circle", "--n", "30", "--dim", "2", "--seed", "1", "--steps", "3", "--k", "8"]),
        Some(0)
    );
}

#[test]
fn grid_runs_resumes_and_orders_rows() {
    let dir = tempdir().unwrap();
    let grid = r#"{
        "base": {"dataset": {"kind": "circle", "n": 40, "radius": 1.0, "noise": 0.05, "seed": 1},
                 "config": {"k": 10, "steps": 20, "lr": 0.1},
                 "evaluation": {"ijk_samples": 500, "fps_size": 20}},
        "axes": {"config.lr": [1.0, 0.1], "config.alpha": [1.0, 0.1]}
    }"#;
    let spec = GridSpec::parse(grid).unwrap();
    let out = dir.path().join("grid.csv");
    assert_eq!(cmd_grid(&spec, &out, None).unwrap(), 4);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], "config.alpha,config.lr,ijk_score,residual_variance,ph0_score,ph1_score,wall_seconds");
    let keys: Vec<String> = lines[1..].iter().map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["0.1,0.1", "0.1,1.0", "1.0,0.1", "1.0,1.0"]);
    for line in &lines[1..] {
        let wall: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(wall > 0.0);
    }

    // drop two rows, as if the run had been interrupted
    let partial: Vec<&str> = [lines[0], lines[1], lines[3]].to_vec();
    fs::write(&out, partial.join("\n") + "\n").unwrap();
    assert_eq!(cmd_grid(&spec, &out, None).unwrap(), 2);
    let resumed = fs::read_to_string(&out).unwrap();
    let resumed: Vec<&str> = resumed.lines().collect();
    assert_eq!(resumed.len(), 5);
    assert_eq!((resumed[1], resumed[3]), (lines[1], lines[3]));
    assert_eq!(cmd_grid(&spec, &out, None).unwrap(), 0);
}

#[test]
fn grid_binary_rejects_malformed_files() {
    let dir = tempdir().unwrap();
    let bad = dir.path().join("grid.json");
    fs::write(&bad, "{\"axes\": [1, 2]}").unwrap();
    let status = dipole_bin().args(["grid", "--grid"]).arg(&bad).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn svg_is_well_formed_and_deterministic() {
    let emb = isomap_embed(&euclidean_distances(&swiss_roll(30, 0.0, 0).unwrap().cloud), 2).unwrap();
    let colors: Vec<[u8; 3]> = (0..30).map(|i| [i as u8 * 8, 0, 255 - i as u8 * 8]).collect();
    let svg = emit_svg(&emb, Some(&colors)).unwrap();
    assert_eq!(svg, emit_svg(&emb, Some(&colors)).unwrap());
    let mut reader = Reader::from_str(&svg);
    let mut circles = 0;
    loop {
        match reader.read_event().unwrap() {
            Event::Eof => break,
            Event::Empty(e) if e.name().as_ref() == b"circle" => circles += 1,
            _ => {}
        }
    }
    assert_eq!(circles, 30);
}

#[test]
fn color_file_feeds_the_plot() {
    let dir = tempdir().unwrap();
    let colors = dir.path().join("colors.csv");
    fs::write(&colors, (0..120).map(|i| format!("{i}\n")).collect::<String>()).unwrap();
    let plot = PlotOptions { svg: true, color: Some(colors) };
    cmd_embed(&small_params(2, 0.1), &plot, None, dir.path()).unwrap();
    let svg = fs::read_to_string(dir.path().join("embedding.svg")).unwrap();
    assert!(svg.contains("#440154") && svg.contains("#fde725"));
}
