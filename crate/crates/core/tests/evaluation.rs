mod common;

use std::collections::BTreeSet;

use coopcast_core::behavior::{fit_model, BehaviorModel, FitConfig, ModelKind, RankPolicy};
use coopcast_core::evaluation::{
    compare, evaluate_aggregate, evaluate_individual, inertia_predicted, make_folds, score_trajectories,
    trajectory_predictions, AggregateMetrics, EvalOptions, IndividualMetrics, MetricsReport, StructureSeries,
};
use coopcast_core::features::FeatureSchema;
use coopcast_core::game::{group_trajectories, DecisionRecord, GameStructure};
use coopcast_core::io::{bundled_structures, generate_synthetic};
use coopcast_core::report::metrics_csv;
use coopcast_core::simulator::{derive_seed, interaction_rng, SimulationConfig};

fn data() -> (Vec<GameStructure>, Vec<DecisionRecord>) {
    let structures = bundled_structures();
    let decisions = generate_synthetic(&common::truth_model(), &structures, 40, 77).unwrap();
    (structures, decisions)
}

#[test]
fn loocv_matches_manually_unrolled_folds() {
    let (structures, decisions) = data();
    let ids: Vec<String> = structures.iter().map(|s| s.id.clone()).collect();
    let plan = make_folds(&ids, 30, 9).unwrap();
    let report = evaluate_individual(ModelKind::Full, &plan, &structures, &decisions, &EvalOptions::default()).unwrap();

    let mut sorted: Vec<&GameStructure> = structures.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut manual = Vec::new();
    for held in &ids {
        let train_s: Vec<GameStructure> = structures.iter().filter(|s| &s.id != held).cloned().collect();
        let train_d: Vec<DecisionRecord> = decisions.iter().filter(|d| &d.structure_id != held).cloned().collect();
        let model = fit_model(ModelKind::Full, &train_s, &train_d, &FitConfig::default()).unwrap();
        let pos = sorted.iter().position(|s| &s.id == held).unwrap();
        let game = sorted[pos];
        let held_d: Vec<DecisionRecord> = decisions.iter().filter(|d| &d.structure_id == held).cloned().collect();
        let trajs = group_trajectories(&held_d).unwrap();
        let fold = plan.assignments[held];
        manual.extend(
            score_trajectories(
                &trajs,
                |_| fold,
                |t| {
                    let stream = derive_seed(pos as u64, t.interaction_id) ^ t.player_id.rotate_left(32);
                    Ok(trajectory_predictions(&model, game, t, Default::default(), &mut interaction_rng(9, stream))?)
                },
            )
            .unwrap(),
        );
    }
    manual.sort_by(|a, b| a.structure_id.cmp(&b.structure_id));
    assert_eq!(report.per_structure, manual);
    assert_eq!(report.summary, IndividualMetrics::from_scores(&manual));
}

#[test]
fn every_decision_is_scored_once() {
    let (structures, decisions) = data();
    let ids: Vec<String> = structures.iter().map(|s| s.id.clone()).collect();
    for k in [3, 7, 30] {
        let plan = make_folds(&ids, k, 1).unwrap();
        for kind in [ModelKind::StaticOnly, ModelKind::DynamicOnly, ModelKind::Fewa] {
            let r = evaluate_individual(kind, &plan, &structures, &decisions, &EvalOptions::default()).unwrap();
            assert_eq!(r.summary.n_t1 + r.summary.n_tgt1, decisions.len());
            let seen: BTreeSet<&str> = r.per_structure.iter().map(|s| s.structure_id.as_str()).collect();
            assert_eq!(seen.len(), 30);
            assert!((r.summary.accuracy_tgt1 + r.summary.error_rate_tgt1 - 1.0).abs() < 1e-15);
        }
    }
}

#[test]
fn generating_model_beats_coin_flips() {
    let (structures, decisions) = data();
    let truth = common::truth_model();
    let trajs = group_trajectories(&decisions).unwrap();
    let by_id = |id: &str| structures.iter().find(|s| s.id == id).unwrap();
    let truth_scores = score_trajectories(
        &trajs,
        |_| 0,
        |t| {
            Ok(trajectory_predictions(
                &truth,
                by_id(&t.structure_id),
                t,
                Default::default(),
                &mut interaction_rng(0, 0),
            )?)
        },
    )
    .unwrap();
    let coin = score_trajectories(&trajs, |_| 0, |t| Ok(vec![0.5; t.moves.len()])).unwrap();
    let total = |s: &[coopcast_core::evaluation::StructureScores]| s.iter().map(|x| x.loglik()).sum::<f64>();
    assert!(total(&truth_scores) > total(&coin));
}

#[test]
fn identical_series_have_zero_error_and_unit_correlation() {
    let series: Vec<StructureSeries> = (0..3)
        .map(|i| StructureSeries {
            structure_id: i.to_string(),
            fold: 0,
            predicted: vec![0.1 * i as f64, 0.5, 0.3 + 0.1 * i as f64],
            observed: vec![0.1 * i as f64, 0.5, 0.3 + 0.1 * i as f64],
            predicted_mean: 0.2 * i as f64,
            observed_mean: 0.2 * i as f64,
        })
        .collect();
    let m = AggregateMetrics::from_series(&series).unwrap();
    assert_eq!((m.rmse_time, m.rmse_avg), (0.0, 0.0));
    assert!((m.cor_time.unwrap() - 1.0).abs() < 1e-12 && (m.cor_avg.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn crossval_reports_are_reproducible() {
    let (structures, decisions) = data();
    let ids: Vec<String> = structures.iter().map(|s| s.id.clone()).collect();
    let plan = make_folds(&ids, 5, 4).unwrap();
    let run = || {
        let opts = EvalOptions {
            fit: FitConfig { rank_policy: RankPolicy::DropAliased, ..FitConfig::default() },
            ..EvalOptions::default()
        };
        let sim = SimulationConfig::new(100, 4);
        let reports: Vec<MetricsReport> = [ModelKind::Full, ModelKind::Baseline]
            .iter()
            .map(|&kind| MetricsReport {
                model_kind: kind,
                k: 5,
                seed: 4,
                individual: Some(evaluate_individual(kind, &plan, &structures, &decisions, &opts).unwrap()),
                aggregate: Some(evaluate_aggregate(kind, &plan, &structures, &decisions, &sim, &opts).unwrap()),
            })
            .collect();
        let cmp = compare(&reports[0], &reports[1]);
        assert_eq!(cmp.tests.len(), 6);
        metrics_csv(&reports).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * (5 + 1));
}

#[test]
fn inertia_prediction_properties() {
    let structures = bundled_structures();
    let w_static = vec![0.0; FeatureSchema::STATIC.len()];
    let flat = common::inertia_model(w_static.clone(), 1.0);
    let game = &structures[0];
    let direct = flat
        .predict_cooperation(
            game,
            Some(&coopcast_core::InteractionHistory::new(
                coopcast_core::Action::Cooperate,
                coopcast_core::Action::Defect,
            )),
            2,
            None,
        )
        .unwrap();
    assert!((inertia_predicted(&flat, game, 8).unwrap() - direct).abs() < 1e-15);
    let mut last = 0.0;
    for gap in [0.5, 1.0, 2.0, 4.0] {
        let v = inertia_predicted(&common::inertia_model(w_static.clone(), gap), game, 8).unwrap();
        assert!(v > last);
        last = v;
    }
    let stat = BehaviorModel::static_only(flat.static_glm.clone().unwrap()).unwrap();
    assert!(inertia_predicted(&stat, game, 8).is_err());
}
