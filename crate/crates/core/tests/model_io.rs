mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coopcast_core::behavior::{fit_model, BehaviorModel, FitConfig, ModelKind, RankPolicy};
use coopcast_core::evaluation::trajectory_predictions;
use coopcast_core::fewa::{FewaParams, InitialAttraction};
use coopcast_core::game::{Action, PlayerTrajectory};
use coopcast_core::io::{
    bundled_structures, decisions_to_csv, generate_synthetic, load_model, model_from_json, model_to_json,
    parse_decisions, parse_structures, save_model, structures_to_csv, IoError,
};
use coopcast_core::simulator::interaction_rng;

fn fitted_full() -> BehaviorModel {
    let structures = bundled_structures();
    let decisions = generate_synthetic(&common::truth_model(), &structures, 40, 8).unwrap();
    fit_model(ModelKind::Full, &structures, &decisions, &FitConfig { seed: Some(8), ..FitConfig::default() }).unwrap()
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = fitted_full();
    let first = dir.path().join("a.json");
    let second = dir.path().join("b.json");
    save_model(&model, &first).unwrap();
    let loaded = load_model(&first).unwrap();
    save_model(&loaded, &second).unwrap();
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    assert_eq!(loaded.static_glm.as_ref().unwrap().weights.len(), 10);
    assert_eq!(loaded.dynamic_glm.as_ref().unwrap().weights.len(), 15);
    assert_eq!(loaded.training, model.training);
}

#[test]
fn predictions_survive_roundtrip_bitwise() {
    let model = fitted_full();
    let loaded = model_from_json(&model_to_json(&model)).unwrap();
    let structures = bundled_structures();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..1000 {
        let game = &structures[rng.random_range(0..structures.len())];
        let len = rng.random_range(1..9);
        let moves: Vec<(Action, Action)> = (0..len)
            .map(|_| (Action::from_cooperated(rng.random_bool(0.5)), Action::from_cooperated(rng.random_bool(0.5))))
            .collect();
        let traj = PlayerTrajectory { structure_id: game.id.clone(), interaction_id: i, player_id: 0, moves };
        let a = trajectory_predictions(&model, game, &traj, Default::default(), &mut interaction_rng(1, i)).unwrap();
        let b = trajectory_predictions(&loaded, game, &traj, Default::default(), &mut interaction_rng(1, i)).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn every_model_kind_roundtrips() {
    let structures = bundled_structures();
    let decisions = generate_synthetic(&common::truth_model(), &structures, 20, 2).unwrap();
    for kind in ModelKind::ALL {
        let model = fit_model(kind, &structures, &decisions, &FitConfig::default()).unwrap();
        let json = model_to_json(&model);
        assert_eq!(model_to_json(&model_from_json(&json).unwrap()), json, "{kind}");
    }
    let fewa = BehaviorModel::fewa(FewaParams { lambda: 2.0, initial_attraction: InitialAttraction::Zero }).unwrap();
    assert_eq!(model_from_json(&model_to_json(&fewa)).unwrap(), fewa);
}

#[test]
fn aliased_coefficients_roundtrip() {
    let structures: Vec<_> = bundled_structures().into_iter().filter(|s| !s.risk).collect();
    let decisions = generate_synthetic(&common::truth_model(), &structures, 30, 4).unwrap();
    let cfg = FitConfig { rank_policy: RankPolicy::DropAliased, ..FitConfig::default() };
    let model = fit_model(ModelKind::Full, &structures, &decisions, &cfg).unwrap();
    assert!(model.static_glm.as_ref().unwrap().is_aliased(3));
    let json = model_to_json(&model);
    let loaded = model_from_json(&json).unwrap();
    assert!(loaded.static_glm.as_ref().unwrap().is_aliased(3));
    assert_eq!(model_to_json(&loaded), json);
}

#[test]
fn unknown_feature_name_is_a_schema_mismatch() {
    let json = model_to_json(&fitted_full()).replacen("\"r1*delta\"", "\"r1*gamma\"", 1);
    assert!(matches!(model_from_json(&json), Err(IoError::SchemaVersionMismatch(_))));
    let json = model_to_json(&fitted_full()).replace("pd-features/1", "pd-features/0");
    assert!(matches!(model_from_json(&json), Err(IoError::SchemaVersionMismatch(_))));
}

#[test]
fn corrupt_files_are_reported() {
    assert!(matches!(model_from_json("{not json"), Err(IoError::CorruptFile(_))));
    let json = model_to_json(&fitted_full()).replace("\"baseline_rate\"", "\"surprise\"");
    assert!(matches!(model_from_json(&json), Err(IoError::CorruptFile(_))));
}

#[test]
fn csv_outputs_roundtrip_through_loaders() {
    let structures = bundled_structures();
    assert_eq!(parse_structures(structures_to_csv(&structures).unwrap().as_slice()).unwrap(), structures);
    let decisions = generate_synthetic(&common::truth_model(), &structures[..3], 5, 1).unwrap();
    assert_eq!(parse_decisions(decisions_to_csv(&decisions).unwrap().as_slice()).unwrap(), decisions);
}
