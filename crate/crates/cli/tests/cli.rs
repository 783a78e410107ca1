use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dploc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dploc"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, args: &[&str]| {
        let dir = tmp.path().join(name);
        let mut all = args.to_vec();
        all.extend(["--out-dir", path(&dir), "--seed", "11", "--duration-s", "2"]);
        let out = dploc(&all);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        files(&dir)
    };
    let a = run("loc-a", &["localize", "--directions=-30,45", "--features"]);
    let b = run("loc-b", &["localize", "--directions=-30,45", "--features"]);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["features.csv", "result.json", "trace.csv", "weights.csv"]
    );
    assert_eq!(a, b);
    let a = run("eval-a", &["evaluate", "--trials", "2"]);
    let b = run("eval-b", &["evaluate", "--trials", "2"]);
    assert_eq!(a.len(), 3);
    assert_eq!(a, b);
}

#[test]
fn simulated_wav_localized_from_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let out = dploc(&[
        "simulate",
        "--directions=-40,40",
        "--seed",
        "3",
        "--out-dir",
        path(&scene),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = dploc(&[
        "localize",
        "--wav",
        path(&scene.join("mixture.wav")),
        "--steering",
        path(&scene.join("steering.csv")),
        "--truth=-40,40",
        "--sources",
        "2",
        "--out-dir",
        path(&tmp.path().join("loc")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("detected: [-40, 40]"), "{stdout}");
    let weights = fs::read_to_string(tmp.path().join("loc/weights.csv")).unwrap();
    assert_eq!(weights.lines().next(), Some("azimuth_deg,alpha"));
    assert_eq!(weights.lines().count(), 38);
}

#[test]
fn file_and_simulation_inputs_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dploc(&[
        "localize",
        "--wav",
        "x.wav",
        "--steering",
        "s.csv",
        "--directions=10",
        "--out-dir",
        path(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("run.conf");
    fs::write(
        &conf,
        "# two sources\nseed = 5\nscene.directions = -20, 50\nscene.duration_s = 2\nsolver.gamma = 0.1\n",
    )
    .unwrap();
    let dir = tmp.path().join("out");
    let out = dploc(&[
        "localize",
        "--config",
        path(&conf),
        "--gamma",
        "0.3",
        "--out-dir",
        path(&dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = fs::read_to_string(dir.join("result.json")).unwrap();
    assert!(doc.contains("\"gamma\": 0.3"), "{doc}");
    assert!(doc.contains("\"seed\": 5"), "{doc}");
}

#[test]
fn unknown_key_and_bad_values_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dploc(&[
        "evaluate",
        "--set",
        "solver.gamme=0.1",
        "--out-dir",
        path(tmp.path()),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamme"));
    let out = dploc(&["evaluate", "--trials", "0", "--out-dir", path(tmp.path())]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn silent_wav_reports_missing_features() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let out = dploc(&["simulate", "--directions=0", "--out-dir", path(&scene)]);
    assert!(out.status.success());
    let wav = tmp.path().join("zeros.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&wav, spec).unwrap();
    for _ in 0..2 * 16_000 {
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    let out = dploc(&[
        "localize",
        "--wav",
        path(&wav),
        "--steering",
        path(&scene.join("steering.csv")),
        "--out-dir",
        path(&tmp.path().join("loc")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no reliable DP-RTF features"));
}
