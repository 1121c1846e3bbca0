use std::path::Path;
use std::process::{Command, Output};

fn ship(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ship")).args(args).current_dir(cwd).output().unwrap()
}

fn count_files(dir: &Path, ext: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| if p.is_dir() { count_files(&p, ext) } else { (p.extension().is_some_and(|e| e == ext)) as usize })
        .sum()
}

#[test]
fn default_synth_writes_twenty_songs_and_a_hundred_labs() {
    let dir = tempfile::tempdir().unwrap();
    let out = ship(&["synth", "--out", "a"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("a");
    assert_eq!(count_files(&root.join("audio"), "wav"), 20);
    assert_eq!(count_files(&root.join("labs"), "lab"), 100);
    assert!(root.join("manifest.json").exists());

    // same seed: identical annotations; another seed: another chord sequence
    assert!(ship(&["synth", "--out", "b"], dir.path()).status.success());
    assert!(ship(&["synth", "--out", "c", "--seed", "8"], dir.path()).status.success());
    let lab = "labs/identity/song_000.lab";
    let a = std::fs::read(root.join(lab)).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b").join(lab)).unwrap());
    assert_ne!(a, std::fs::read(dir.path().join("c").join(lab)).unwrap());
}

#[test]
fn train_personalize_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"seed": 2, "n_songs": 2, "song_length": 16.0, "sample_rate": 22050,
        "segment_duration": [2.0, 4.0],
        "chord_pool": ["C:maj", "A:min", "G:7", "F:maj7", "N"],
        "annotator_profiles": [{"id": "full", "rule": "identity"}, {"id": "plain", "rule": "maj_min_only"}]}"#;
    std::fs::write(dir.path().join("spec.json"), spec).unwrap();
    let run = |args: &[&str]| {
        let out = ship(args, dir.path());
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["synth", "--spec", "spec.json", "--out", "corpus"]);
    run(&["train", "--manifest", "corpus/manifest.json", "--model", "m.model", "--annotators", "all", "--max-epochs", "2", "--hidden", "16"]);
    let history = std::fs::read_to_string(dir.path().join("m.history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    run(&["personalize", "--manifest", "corpus/manifest.json", "--model", "m.model", "--out", "est", "--annotators", "plain"]);
    let lab = std::fs::read_to_string(dir.path().join("est/plain/song_000.lab")).unwrap();
    for line in lab.lines() {
        let label = line.split_whitespace().nth(2).unwrap();
        assert!(["C:maj", "A:min", "G:maj", "F:maj", "N"].contains(&label), "{label}");
    }
    let out = run(&[
        "evaluate", "--manifest", "corpus/manifest.json", "--estimates", "est", "--out", "rep",
        "--annotators", "plain", "--metrics", "root,7ths",
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().next().unwrap(), "annotator\tsystem\troot\t7ths");
    assert_eq!(stdout.lines().count(), 2);
    assert!(dir.path().join("rep/report.json").exists());
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["train", "--manifest", "missing.json", "--model", "m"],
        &["evaluate", "--manifest", "m.json", "--estimates", "e", "--out", "o", "--metrics", "bogus"],
        &["experiment", "--manifest", "m.json", "--out", "o", "--ratios", "0.5,0.5"],
        &["frobnicate"],
    ];
    for args in cases {
        let out = ship(args, dir.path());
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
    let out = ship(&["train", "--manifest", "missing.json", "--model", "m"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn unknown_annotator_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"seed": 1, "n_songs": 1, "song_length": 8.0, "sample_rate": 22050, "segment_duration": [2.0, 3.0],
        "chord_pool": ["C:maj", "G:maj"], "annotator_profiles": [{"id": "only", "rule": "identity"}]}"#;
    std::fs::write(dir.path().join("spec.json"), spec).unwrap();
    assert!(ship(&["synth", "--spec", "spec.json", "--out", "c"], dir.path()).status.success());
    let out = ship(
        &["train", "--manifest", "c/manifest.json", "--model", "m", "--annotators", "nobody", "--max-epochs", "1", "--hidden", "4"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown annotator `nobody`"));
}
