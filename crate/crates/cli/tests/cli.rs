use std::fs;

use ctgraph::config::{load_config, preset, write_config};
use ctgraph_cli::{run_with, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};

fn ctgraph(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("ctgraph").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn analyze_prints_key_value_block() {
    let (code, out, _) = ctgraph(&["analyze", "--b", "2", "--d", "16", "--p", "0.5"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("p_e=1.995491e-15\n"), "{out}");
    assert!(out.contains("n_states=262144\n"));
    assert!(out.lines().all(|l| l.split_once('=').is_some()));
}

#[test]
fn analyze_csv_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    let (code, out, _) = ctgraph(&["analyze", "--preset", "CT-FO-B2", "--p", "0", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("expected_rho=8\n"), "{out}");
    let text = fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("b,d,p,"));
    assert!(lines[1].starts_with("2,3,0,8,"));
}

#[test]
fn config_errors_exit_two() {
    let (code, _, err) = ctgraph(&["analyze", "--b", "2", "--d", "2", "--p", "1.2"]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("graph_shape"));
    let (code, _, err) = ctgraph(&["analyze", "--preset", "CT-XX"]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("CT-FO-B1"), "{err}");
    let (code, _, _) = ctgraph(&["run", "--agent", "random", "--out", "-"]);
    assert_eq!(code, EXIT_CONFIG);
    let (code, _, _) = ctgraph(&["frobnicate"]);
    assert_eq!(code, EXIT_CONFIG);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"seed": 1}"#).unwrap();
    let (code, _, err) = ctgraph(&["analyze", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("graph_shape"), "{err}");
}

#[test]
fn help_exits_zero() {
    let (code, out, _) = ctgraph(&["--help"]);
    assert_eq!(code, EXIT_OK);
    for sub in ["run", "analyze", "validate", "curriculum", "images"] {
        assert!(out.contains(sub));
    }
}

#[test]
fn run_writes_identical_transcripts_for_identical_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (path, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        let (code, out, _) = ctgraph(&[
            "run", "--preset", "CT-CO-B1", "--agent", "random", "--episodes", "50", "--seed", seed, "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("episodes=50"));
    }
    let ta = fs::read(&a).unwrap();
    assert_eq!(ta, fs::read(&b).unwrap());
    assert_ne!(ta, fs::read(&c).unwrap());
    let text = String::from_utf8(ta).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,state_kind,depth,path,obs_class,action,reward,done");
    assert_eq!(text.lines().filter(|l| l.starts_with("0,home,")).count(), 50);
}

#[test]
fn optimal_agent_to_stdout() {
    let mut spec = preset("CT-FO-B1").unwrap();
    spec.reward.goal = Some(vec![2, 2]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fo.json");
    write_config(&spec, &cfg).unwrap();
    let (code, out, _) = ctgraph(&["run", "--config", cfg.to_str().unwrap(), "--agent", "optimal", "--out", "-"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[6], "5,wait,2,2-2,11,0,1,true");
}

#[test]
fn qlearn_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let curve = dir.path().join("curve.csv");
    let (code, _, _) = ctgraph(&[
        "run", "--preset", "CT-FO-B1", "--agent", "qlearn", "--episodes", "2000", "--out",
        trace.to_str().unwrap(), "--curve", curve.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(curve).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "episode,return,epsilon");
    assert_eq!(rows.len(), 2001);
    let tail: f64 = rows[rows.len() - 100..]
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum::<f64>()
        / 100.0;
    assert!(tail >= 0.95, "tail {tail}");

    let (code, _, _) = ctgraph(&["run", "--preset", "CT-FO-B1", "--out", "-", "--curve", "x.csv"]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn unwritable_output_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("t.csv");
    let (code, _, _) = ctgraph(&["run", "--preset", "CT-FO-B1", "--out", target.to_str().unwrap()]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn validate_passes_on_presets() {
    for name in ["CT-FO-B1", "CT-POSR-B1", "CT-FO-B2"] {
        let (code, out, err) = ctgraph(&["validate", "--preset", name, "--episodes", "100000"]);
        assert_eq!(code, EXIT_OK, "{name}: {out}{err}");
        assert!(out.contains("P_R") && out.contains("length_pmf"));
    }
}

#[test]
fn curriculum_writes_task_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("cur");
    let (code, _, _) = ctgraph(&[
        "curriculum", "--preset", "CT-SU-B1", "--mode", "reward", "--tasks", "4", "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let mut goals = Vec::new();
    for i in 0..4 {
        let spec = load_config(out_dir.join(format!("task_{i:03}.json"))).unwrap();
        goals.push(spec.reward.goal.unwrap());
    }
    goals.sort();
    goals.dedup();
    assert_eq!(goals.len(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["mode"], "reward");
    assert_eq!(manifest["tasks"].as_array().unwrap().len(), 4);

    let (code, _, _) = ctgraph(&[
        "curriculum", "--preset", "CT-SU-B1", "--mode", "reward", "--tasks", "5", "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn aligned_depth_curriculum() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = ctgraph(&[
        "curriculum", "--preset", "CT-FO-B1", "--mode", "depth", "--tasks", "3", "--aligned-goals", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let specs: Vec<_> = (0..3).map(|i| load_config(dir.path().join(format!("task_{i:03}.json"))).unwrap()).collect();
    for w in specs.windows(2) {
        let (a, b) = (w[0].reward.goal.as_ref().unwrap(), w[1].reward.goal.as_ref().unwrap());
        assert!(b.starts_with(a));
        assert_eq!(w[1].graph_shape.d, w[0].graph_shape.d + 1);
    }
}

#[test]
fn images_dump_pgm_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = ctgraph(&["images", "--preset", "CT-SU-B1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let manifest = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    let rows: Vec<&str> = manifest.lines().collect();
    assert_eq!(rows[0], "class_id,file,rotation,blueprint");
    assert_eq!(rows.len(), 6);
    for row in &rows[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert!(["0", "30", "60"].contains(&cols[2]));
        assert_eq!(cols[3].len(), 16);
        let pgm = fs::read_to_string(dir.path().join(cols[1])).unwrap();
        assert!(pgm.starts_with("P2\n12 12\n255\n"));
    }
}

#[test]
fn image_dumps_follow_seed() {
    let mut spec = preset("CT-SU-B1").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut dumps = Vec::new();
    for seed in [1u64, 1, 2] {
        spec.image_set.seed = seed;
        let cfg = dir.path().join("c.json");
        write_config(&spec, &cfg).unwrap();
        let out = dir.path().join(format!("img{}", dumps.len()));
        let (code, _, _) = ctgraph(&["images", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
        dumps.push(fs::read(out.join("class_0003.pgm")).unwrap());
    }
    assert_eq!(dumps[0], dumps[1]);
    assert_ne!(dumps[0], dumps[2]);
}
