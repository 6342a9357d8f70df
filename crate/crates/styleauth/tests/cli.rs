//! End-to-end CLI round trip: synthesize a corpus on disk, dump features,
//! train one model, and verify clips against it.

use std::path::Path;
use std::process::{Command, Output};

fn styleauth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_styleauth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed ({}):\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn synth_train_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let corpus_s = corpus.to_str().unwrap();

    let out = styleauth(&["synth", "--out", corpus_s, "--speakers", "1", "--seed", "7"]);
    assert_ok(&out, "synth");
    assert!(corpus.join("manifest.csv").is_file());
    let clip = corpus.join("m01/neutral_s1_t6.wav");
    assert!(clip.is_file(), "expected clip at {}", clip.display());

    let out = styleauth(&["features", "--clip", clip.to_str().unwrap()]);
    assert_ok(&out, "features");
    let dump = String::from_utf8(out.stdout).unwrap();
    let first = dump.lines().next().expect("at least one frame");
    // One start sample plus 16 cepstral values per line.
    assert_eq!(first.split_whitespace().count(), 17, "line: {first}");

    let config = dir.path().join("config.toml");
    std::fs::write(&config, "n_states = 3\nn_mix = 2\nsupra_mix = 1\nseed = 7\n").unwrap();
    let model = dir.path().join("neutral.json");
    let out = styleauth(&[
        "train",
        "--corpus",
        corpus_s,
        "--claim",
        "m01:1:neutral",
        "--out",
        model.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_ok(&out, "train");
    assert!(model.is_file());

    // A held-out token of the modeled style must be accepted...
    let verdict = |clip: &Path| {
        let out = styleauth(&[
            "verify",
            "--model",
            model.to_str().unwrap(),
            "--clip",
            clip.to_str().unwrap(),
        ]);
        assert_ok(&out, "verify");
        String::from_utf8(out.stdout).unwrap()
    };
    let accept = verdict(&clip);
    assert!(accept.contains("ACCEPT"), "unexpected verdict: {accept}");

    // ...and a clearly different style must be rejected.
    let reject = verdict(&corpus.join("m01/shouted_s1_t6.wav"));
    assert!(reject.contains("REJECT"), "unexpected verdict: {reject}");
}
