use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use evsyn::stats::{quantile_sorted, RandomStream};
use evsyn_cli::case_study::write_case_study;
use evsyn_cli::config::PipelineConfig;
use evsyn_cli::pipeline::run_pipeline;

const SEED: u64 = 20_140_101;

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("case_study")
}

fn hta_set() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/hta_set.csv")
}

/// Relative path to contents for every file under `dir`.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn copy_tree(from: &Path, to: &Path) {
    for (rel, bytes) in tree(from) {
        let p = to.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, bytes).unwrap();
    }
}

/// The bundled config, shortened so a run takes well under a second.
fn quick(cfg_path: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_file(cfg_path).unwrap();
    cfg.chain.iterations = 4000;
    cfg.chain.burn_in = 2000;
    cfg.draws = 300;
    cfg
}

fn evsyn(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_evsyn"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn bundled_fixture_regenerates_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    write_case_study(dir.path(), SEED).unwrap();
    let fresh = tree(dir.path());
    let shipped = tree(&bundled());
    assert_eq!(
        fresh.keys().collect::<Vec<_>>(),
        shipped.keys().collect::<Vec<_>>()
    );
    for (k, v) in &fresh {
        assert!(shipped[k] == *v, "{k} differs from the bundled copy");
    }
}

#[test]
fn outputs_present_and_rerun_identical() {
    let cfg = quick(&bundled().join("config.json"));
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let res = run_pipeline(&cfg, a.path()).unwrap();
    run_pipeline(&cfg, b.path()).unwrap();

    let names: Vec<String> = tree(a.path()).into_keys().collect();
    let want = [
        "brma_predicted.json",
        "ceac.svg",
        "ceac_2state.csv",
        "ceac_2state.svg",
        "ceac_3state.csv",
        "hr_os.csv",
        "hr_pfs.csv",
        "manifest.json",
        "plane.svg",
        "plane_2state.csv",
        "plane_2state.svg",
        "plane_3state.csv",
        "psa_2state.csv",
        "psa_3state.csv",
        "summary.json",
    ];
    assert_eq!(names, want);
    assert_eq!(res.files.len(), want.len());
    assert_eq!(tree(a.path()), tree(b.path()));

    let psa = std::fs::read_to_string(a.path().join("psa_3state.csv")).unwrap();
    assert_eq!(psa.lines().next(), Some("draw,intervention,cost,qaly"));
    assert_eq!(psa.lines().count(), 1 + 3 * cfg.draws);
    let ceac = std::fs::read_to_string(a.path().join("ceac_3state.csv")).unwrap();
    let per_arm = ceac.lines().skip(1).filter(|l| l.contains(",P,")).count();
    assert_eq!(per_arm, 201);

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], SEED);
    assert_eq!(summary["arms"].as_array().unwrap().len(), 13);
    let pred: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("brma_predicted.json")).unwrap())
            .unwrap();
    assert_eq!(pred["predictions"][0]["study"], "TAX327");
    assert_eq!(pred["predictions"][0]["outcome"], "PFS");
}

#[test]
fn stage_failure_leaves_partial_files() {
    let mut cfg = quick(&bundled().join("config.json"));
    cfg.indirect[0].via = "nobody".into();
    let out = tempfile::tempdir().unwrap();
    let err = run_pipeline(&cfg, out.path()).unwrap_err();
    assert!(err.to_string().contains("indirect"), "{err}");
    let names: Vec<String> = tree(out.path()).into_keys().collect();
    assert!(!names.is_empty());
    assert!(names.iter().all(|n| n.ends_with(".partial")), "{names:?}");
    assert!(names.contains(&"hr_os.csv.partial".to_string()));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&bundled(), dir.path());
    let gone = dir.path().join("curves/swog_pfs_mp_risk.csv");
    std::fs::remove_file(&gone).unwrap();
    let out = dir.path().join("results");
    let (code, _, err) = evsyn(&[
        "run",
        "--config",
        dir.path().join("config.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains(gone.to_str().unwrap()), "{err}");
}

#[test]
fn manifest_digests_track_inputs() {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&bundled(), dir.path());
    let cfg_path = dir.path().join("config.json");
    let manifest = |tag: &str| -> serde_json::Value {
        let out = dir.path().join(tag);
        run_pipeline(&quick(&cfg_path), &out).unwrap();
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
    };
    let first = manifest("a");
    let again = manifest("b");
    assert_eq!(first["inputs"], again["inputs"]);
    assert_eq!(first["outputs"], again["outputs"]);

    // nudge the summary row's SE in its last digits
    let summaries = dir.path().join("summaries.csv");
    let text = std::fs::read_to_string(&summaries)
        .unwrap()
        .replace("0.19228872509601536", "0.19228872509601");
    std::fs::write(&summaries, text).unwrap();
    let changed = manifest("c");
    let inputs = |m: &serde_json::Value| -> BTreeMap<String, String> {
        m["inputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| {
                (
                    d["file"].as_str().unwrap().to_string(),
                    d["sha256"].as_str().unwrap().to_string(),
                )
            })
            .collect()
    };
    let (before, after) = (inputs(&first), inputs(&changed));
    assert_eq!(before.len(), 27);
    let differ: Vec<&String> = before.keys().filter(|k| before[*k] != after[*k]).collect();
    assert_eq!(differ, ["summaries.csv"]);
}

#[test]
fn cost_ratio_matches_reported_interval() {
    let cfg = PipelineConfig::from_file(&bundled().join("config.json")).unwrap();
    let p = cfg.three_state.intervention("P").unwrap();
    let ratio = p.cost_ratio.unwrap();
    let mut rng = RandomStream::new(7, 0);
    let mut draws: Vec<f64> = (0..100_000)
        .map(|_| ratio.numerator.sample(&mut rng) / ratio.denominator.sample(&mut rng))
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    draws.sort_by(f64::total_cmp);
    let (lo, hi) = (
        quantile_sorted(&draws, 0.025),
        quantile_sorted(&draws, 0.975),
    );
    assert!((mean - 1.278).abs() < 0.01, "{mean}");
    assert!((lo - 0.946).abs() < 0.01, "{lo}");
    assert!((hi - 1.691).abs() < 0.01, "{hi}");
}

#[test]
fn cli_meta_and_indirect() {
    let data = hta_set();
    let data = data.to_str().unwrap();
    let (code, out, _) = evsyn(&["meta", "--data", data, "--contrast", "M+P/P"]);
    assert_eq!((code, out.trim()), (0, "0.905 (0.753, 1.087)"));
    let (code, out, _) = evsyn(&["meta", "--data", data, "--outcome", "PFS"]);
    assert_eq!((code, out.trim()), (0, "0.639 (0.532, 0.769)"));
    let (code, out, _) = evsyn(&[
        "indirect",
        "--data",
        data,
        "--treatment",
        "D+P",
        "--via",
        "M+P",
        "--comparator",
        "P",
    ]);
    assert_eq!((code, out.trim()), (0, "0.688 (0.522, 0.906)"));

    // several contrasts without --contrast is a usage error
    assert_eq!(evsyn(&["meta", "--data", data]).0, 1);
    assert_eq!(evsyn(&["meta", "--data", "/no/such/file.csv"]).0, 2);
    assert_eq!(evsyn(&["no-such-command"]).0, 1);
}

#[test]
fn cli_ceac_rows_per_intervention() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&quick(&bundled().join("config.json")), dir.path()).unwrap();
    let psa = dir.path().join("psa_3state.csv");
    let (code, out, _) = evsyn(&["ceac", "--psa", psa.to_str().unwrap()]);
    assert_eq!(code, 0);
    let mut counts = BTreeMap::new();
    for line in out.lines().skip(1) {
        *counts
            .entry(line.split(',').nth(1).unwrap().to_string())
            .or_insert(0) += 1;
    }
    assert_eq!(
        counts.into_iter().collect::<Vec<_>>(),
        [("D+P".into(), 201), ("M+P".into(), 201), ("P".into(), 201)]
    );
    assert_eq!(
        evsyn(&[
            "ceac",
            "--psa",
            psa.to_str().unwrap(),
            "--thresholds",
            "5:1:1"
        ])
        .0,
        2
    );
}
