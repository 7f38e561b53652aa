mod oracles;
mod suites;

use iavc::data::{checkpoint, load_checkpoint, save_checkpoint};
use iavc::Error;

#[test]
fn persistence_and_determinism() {
    let checks = suites::persistence_checks().unwrap();
    for (name, ok) in &checks {
        println!("{name:<45} {ok}");
    }
    assert!(checks.iter().all(|(_, ok)| *ok), "{checks:?}");
}

#[test]
fn file_round_trip_and_missing_file() {
    let corpus = iavc::data::synth_generate(&iavc::data::SynthConfig {
        n_games: 1,
        clips_per_game: 3,
        n_players: 3,
        d_in: 6,
        ..Default::default()
    })
    .unwrap();
    let model = iavc::IavcModel::new(iavc::HyperConfig::tiny(), corpus.catalog, corpus.vocab).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let ck = model.to_checkpoint(None, serde_json::json!({"note": "x"}));
    save_checkpoint(&path, &ck).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(checkpoint::encode_checkpoint(&back).unwrap(), std::fs::read(&path).unwrap());
    assert!(back.optimizer.is_none());
    assert_eq!(back.extra["note"], "x");
    assert!(matches!(
        load_checkpoint(&dir.path().join("absent.ckpt")),
        Err(Error::MissingCheckpoint(_))
    ));
}

#[test]
fn version_and_magic_are_checked() {
    let corpus = iavc::data::synth_generate(&iavc::data::SynthConfig {
        n_games: 1,
        clips_per_game: 2,
        n_players: 2,
        d_in: 6,
        ..Default::default()
    })
    .unwrap();
    let model = iavc::IavcModel::new(iavc::HyperConfig::tiny(), corpus.catalog, corpus.vocab).unwrap();
    let mut bytes = checkpoint::encode_checkpoint(&model.to_checkpoint(None, serde_json::Value::Null)).unwrap();
    bytes[4] = 9;
    assert!(matches!(
        checkpoint::decode_checkpoint(&bytes),
        Err(Error::VersionMismatch { found: 9, expected: 1 })
    ));
    assert!(matches!(checkpoint::decode_checkpoint(b"NOPE...."), Err(Error::CorruptFile(_))));
}
