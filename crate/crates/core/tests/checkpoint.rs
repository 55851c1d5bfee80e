mod common;

use common::{classify_config, random_model, random_tree, sizes_for};
use dctree::composers::Variant;
use dctree::model::Model;
use dctree::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(variant: Variant) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    random_model(classify_config(variant, sizes_for(variant, 4, 3, 2), 3), 0.5, &mut rng)
}

#[test]
fn round_trip_preserves_bytes_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for variant in [Variant::Recnn, Variant::Treelstm, Variant::DcRecnn, Variant::DcTreelstm] {
        let original = model(variant);
        let path = dir.path().join(format!("{variant}.json"));
        original.save(&path).unwrap();
        let loaded = Model::load(&path).unwrap();
        assert_eq!(loaded.to_checkpoint_string(), original.to_checkpoint_string());
        let tree = random_tree(5, &mut rng);
        assert_eq!(loaded.classify(&tree).unwrap(), original.classify(&tree).unwrap());
    }
}

fn edit(text: &str, f: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    f(&mut v);
    v.to_string()
}

#[test]
fn malformed_checkpoints_are_rejected() {
    let text = model(Variant::DcTreelstm).to_checkpoint_string();

    let garbage = Model::from_checkpoint_str("{not json").unwrap_err();
    assert!(matches!(garbage, Error::Checkpoint(_)), "{garbage:?}");

    let wrong_version = edit(&text, |v| v["version"] = 99.into());
    assert!(matches!(Model::from_checkpoint_str(&wrong_version), Err(Error::Checkpoint(_))));

    let short_data = edit(&text, |v| {
        v["params"][0]["data"].as_array_mut().unwrap().pop();
    });
    assert!(matches!(Model::from_checkpoint_str(&short_data), Err(Error::Checkpoint(_))));

    let reshaped = edit(&text, |v| {
        let p = &mut v["params"][0];
        let [r, c] = [p["shape"][0].as_u64().unwrap(), p["shape"][1].as_u64().unwrap()];
        p["shape"] = serde_json::json!([c, r]);
    });
    let err = Model::from_checkpoint_str(&reshaped).unwrap_err();
    assert!(matches!(err, Error::ParamShape { .. }), "{err:?}");

    let missing = edit(&text, |v| {
        v["params"].as_array_mut().unwrap().remove(0);
    });
    assert!(matches!(Model::from_checkpoint_str(&missing), Err(Error::UnknownParam(_))));

    let duplicated = edit(&text, |v| {
        let first = v["params"][0].clone();
        v["params"].as_array_mut().unwrap().push(first);
    });
    assert!(matches!(Model::from_checkpoint_str(&duplicated), Err(Error::Checkpoint(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = Model::load(&dir.path().join("absent.json")).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err:?}");
}
