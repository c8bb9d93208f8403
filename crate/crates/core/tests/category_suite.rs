use std::collections::BTreeSet;

use oed_core::category::{
    category_space, enumerate_structures, exemplar_model, is_linearly_separable, ms54_structure, prototype_model,
    rank_structures, structure_eig, ParameterMode,
};
use oed_core::design::{expected_information_gain, OutcomePrior};
use oed_core::{CategoryStructure, ModelSpace, StimulusObject};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point_space() -> ModelSpace<oed_core::VectorModel<CategoryStructure>> {
    category_space(&["exemplar", "prototype"], None, ParameterMode::default())
        .unwrap()
        .unwrap()
}

#[test]
fn enumeration_count_and_validity() {
    let all = enumerate_structures();
    assert_eq!(all.len(), 933);
    let unique: BTreeSet<_> = all.iter().collect();
    assert_eq!(unique.len(), 933);
    assert!(all.windows(2).all(|w| w[0] < w[1]));
    for s in &all {
        assert!(s.validate().is_ok(), "{s}");
        assert_eq!(&s.canonical(), s);
    }
    assert!(all.contains(&ms54_structure().unwrap().canonical()));
    assert_eq!(enumerate_structures(), all);
}

#[test]
fn every_ms54_relabeling_is_in_the_same_orbit() {
    let ms = ms54_structure().unwrap();
    let all = enumerate_structures();
    let hits = all.iter().filter(|s| **s == ms.canonical()).count();
    assert_eq!(hits, 1);
    assert!(is_linearly_separable(ms.train_a(), ms.train_b()));
}

#[test]
fn sweep_is_finite_and_ms54_is_weak() {
    let space = point_space();
    let all = enumerate_structures();
    let reports = rank_structures(&space, &all, 1, OutcomePrior::Predictive).unwrap();
    assert_eq!(reports.len(), 933);
    assert!(reports.iter().all(|r| r.eig.is_finite() && r.eig >= 0.0));
    let ms_key = ms54_structure().unwrap().canonical().to_string();
    let ms = reports.iter().find(|r| r.key == ms_key).unwrap();
    assert!(ms.rank > 933 / 2, "rank {}", ms.rank);
    // values from an independent dense enumeration over all 2^16 label vectors
    assert!((reports[0].eig - 0.5392).abs() < 1e-4);
    assert!((ms.eig - 0.3422).abs() < 1e-4);
}

#[test]
fn fast_path_matches_direct_enumeration_on_real_structures() {
    let space = point_space();
    let direct_space = space.to_models();
    let all = enumerate_structures();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ys: Vec<Vec<bool>> = (0..1usize << 16)
        .map(|i| (0..16).map(|j| i >> j & 1 == 1).collect())
        .collect();
    for s in all.choose_multiple(&mut rng, 3) {
        let fast = structure_eig(&space, s, 1, OutcomePrior::Predictive).unwrap();
        let direct = expected_information_gain(&direct_space, s, OutcomePrior::Predictive, &ys)
            .unwrap()
            .eig;
        assert!((fast - direct).abs() < 1e-9, "{s}: {fast} vs {direct}");
    }
}

#[test]
fn marginalized_mode_runs_on_ms54() {
    let space = category_space(&["exemplar", "prototype"], None, ParameterMode::Marginalized)
        .unwrap()
        .unwrap();
    let ms = ms54_structure().unwrap();
    let eig = structure_eig(&space, &ms, 1, OutcomePrior::Predictive).unwrap();
    assert!(eig.is_finite() && eig > 0.0);
    assert!(structure_eig(&space, &ms, 2, OutcomePrior::Predictive).is_err());
}

#[test]
fn prototype_ignores_training_set() {
    let all = enumerate_structures();
    let m = prototype_model(ParameterMode::default());
    assert_eq!(m.items(&all[0]).unwrap(), m.items(&all[500]).unwrap());
    let e = exemplar_model(ParameterMode::default());
    assert_ne!(e.items(&all[0]).unwrap(), e.items(&all[500]).unwrap());
}

#[test]
fn json_lines_round_trip() {
    for s in enumerate_structures().iter().take(20) {
        let line = serde_json::to_string(s).unwrap();
        assert!(!line.contains('\n'));
        assert_eq!(CategoryStructure::from_json(&line).unwrap(), *s);
        assert_eq!(s.to_string().parse::<CategoryStructure>().unwrap(), *s);
    }
    let o: StimulusObject = "0101".parse().unwrap();
    assert_eq!(o.to_string(), "0101");
}
