use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_wardsense");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    for sub in [
        "synth",
        "synth-dataset",
        "train-activity",
        "train-depression",
        "train-cognitive",
        "eval",
        "spectrogram",
        "voxelize",
        "export-cloud",
        "serve",
        "replay",
    ] {
        let o = run(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub} --help");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["synth", "--kind", "walking"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let o = run(&["synth", "--kind", "jogging", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["synth", "--kind", "idle", "--falls", "3", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["voxelize", "--in", p(&dir.path().join("absent.txt")), "--out", p(&dir.path().join("v.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no such file"));
}

#[test]
fn synth_train_eval_round_trip_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    let model = dir.path().join("a.model");
    for (out, seed, n) in [(&train, "3", "120"), (&test, "300", "40")] {
        let o = run(&["synth-dataset", "--task", "activity", "--seed", seed, "--per-class", n, "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let train_once = || {
        let o = run(&["--deterministic", "train-activity", "--data", p(&train), "--seed", "5", "--out", p(&model)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (stdout(&o), std::fs::read(&model).unwrap())
    };
    let (log_a, model_a) = train_once();
    let (log_b, model_b) = train_once();
    assert_eq!(log_a, log_b);
    assert_eq!(model_a, model_b);

    let o = run(&["eval", "--model", p(&model), "--data", p(&test), "--csv", p(&dir.path().join("cm.csv"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let acc: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("accuracy "))
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc >= 0.95, "{text}");
    let csv = std::fs::read_to_string(dir.path().join("cm.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

/// Argmax bin of every frame in a spectrogram CSV.
fn frame_peaks(csv: &Path) -> Vec<usize> {
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "frame");
    assert_eq!(header.len(), 1 + 513);
    lines
        .map(|l| {
            let row: Vec<f64> = l.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
            assert!(row.iter().all(|&v| v >= -80.0));
            row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
        })
        .collect()
}

#[test]
fn spectrogram_peaks_sit_in_the_tone_band() {
    let dir = tempfile::tempdir().unwrap();
    let bin_hz = 44100.0 / 1024.0;
    for (kind, lo, hi) in [("tone_low", 150.0, 400.0), ("tone_high", 2000.0, 4000.0)] {
        let pcm = dir.path().join(format!("{kind}.pcm"));
        let csv = dir.path().join(format!("{kind}.csv"));
        assert!(run(&["synth", "--kind", kind, "--duration", "1", "--seed", "2", "--out", p(&pcm)]).status.success());
        let o = run(&["spectrogram", "--in", p(&pcm), "--out", p(&csv)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let peaks = frame_peaks(&csv);
        assert_eq!(peaks.len(), 85);
        for b in peaks {
            let f = b as f64 * bin_hz;
            assert!(f >= lo - bin_hz && f <= hi + bin_hz, "{kind}: peak at {f} Hz");
        }
    }
}

#[test]
fn voxelize_and_export_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let strokes = dir.path().join("spiral.txt");
    assert!(run(&["synth", "--kind", "spiral_tremor", "--seed", "4", "--out", p(&strokes)]).status.success());
    let vox = dir.path().join("v.csv");
    let o = run(&["voxelize", "--in", p(&strokes), "--dims", "8,8,8", "--out", p(&vox)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&vox).unwrap();
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(values.iter().all(|&v| v > 0.0 && v <= 1.0));
    assert!(values.contains(&1.0));
    assert_eq!(run(&["voxelize", "--in", p(&strokes), "--dims", "8,0,8", "--out", p(&vox)]).status.code(), Some(2));

    let cloud = dir.path().join("c.csv");
    assert!(run(&["export-cloud", "--in", p(&strokes), "--out", p(&cloud)]).status.success());
    let points = std::fs::read_to_string(&strokes)
        .unwrap()
        .lines()
        .filter(|l| l.contains(','))
        .count();
    let rows = std::fs::read_to_string(&cloud).unwrap().lines().count();
    assert_eq!(rows, points);
}
