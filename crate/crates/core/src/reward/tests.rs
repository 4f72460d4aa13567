use std::cell::Cell;

use super::external::parse_scores;
use super::*;
use crate::chem::{compute_descriptors, parse_smiles, qed as chem_qed_of};

/// Returns a constant score and counts the molecules it was asked about.
struct Probe {
    score: Result<f64, OracleError>,
    seen: Cell<usize>,
}

impl Probe {
    fn new(score: Result<f64, OracleError>) -> Self {
        Probe { score, seen: Cell::new(0) }
    }
}

impl DockingOracle for Probe {
    fn score_batch(&self, smiles: &[String]) -> Vec<Result<f64, OracleError>> {
        self.seen.set(self.seen.get() + smiles.len());
        smiles.iter().map(|_| self.score.clone()).collect()
    }
}

fn qed_of(s: &str) -> f64 {
    let g = parse_smiles(s).unwrap();
    chem_qed_of(&compute_descriptors(&g), QedParams::builtin()).unwrap()
}

fn lenient() -> RewardConfig {
    RewardConfig {
        qed_threshold: 0.0,
        ..RewardConfig::default()
    }
}

#[test]
fn normalize_examples() {
    assert_eq!(normalize_dock(-5.0, true, -10.0).unwrap(), 0.5);
    assert_eq!(normalize_dock(-12.0, true, -10.0).unwrap(), 1.0);
    assert_eq!(normalize_dock(-7.0, false, -10.0).unwrap(), 0.0);
    assert_eq!(normalize_dock(f64::NAN, false, -10.0).unwrap(), 0.0);
    assert_eq!(normalize_dock(3.0, true, -10.0).unwrap(), 0.0);
    assert_eq!(normalize_dock(-5.0, true, 0.0), Err(RewardError::NonNegativeK(0.0)));
    assert!(matches!(
        normalize_dock(f64::NEG_INFINITY, true, -10.0),
        Err(RewardError::NonFiniteScore(_))
    ));
}

#[test]
fn reward_is_product() {
    let cfg = lenient();
    let rec = docked_record("C", 0.6, Ok(-8.0), &cfg);
    assert!((rec.dock - 0.8).abs() < 1e-15);
    assert!((rec.reward - 0.48).abs() < 1e-12);
    assert_eq!(rec.reward, rec.dock * rec.qed);
    let top = docked_record("C", 1.0, Ok(-10.0), &cfg);
    assert_eq!(top.reward, 1.0);
    assert_eq!(top.as_score, 1.0);
    let dock_mode = RewardConfig {
        as_mode: AsMode::Dock,
        ..lenient()
    };
    assert_eq!(docked_record("C", 0.6, Ok(-8.0), &dock_mode).as_score, 0.8);
}

#[test]
fn validity_gate() {
    let cfg = RewardConfig::default();
    assert!(!is_valid("C1CC", &cfg));
    assert!(is_valid("CCO", &lenient()));
    let q = qed_of("c1ccccc1O");
    let just_above = RewardConfig {
        qed_threshold: q + 0.01,
        ..RewardConfig::default()
    };
    assert!(!is_valid("c1ccccc1O", &just_above));
    let at = RewardConfig {
        qed_threshold: q,
        ..RewardConfig::default()
    };
    assert!(is_valid("c1ccccc1O", &at));
}

#[test]
fn invalid_molecules_never_reach_oracle() {
    let probe = Probe::new(Ok(-12.0));
    let cfg = RewardConfig::default();
    for s in ["C1CC", "C(C", "CC(C)(C)(C)C", "", "xyz", "N(=O)(=O)=O"] {
        let rec = reward(s, &probe, &cfg);
        assert!(!rec.valid, "{s}");
        assert_eq!(rec.reward, 0.0);
        assert_eq!(rec.dock, 0.0);
    }
    // a long alkane fails the QED gate at 0.3
    let rec = reward("CCCCCCCCCCCCCCCCCCCC", &probe, &cfg);
    assert!(rec.chem_valid && !rec.valid);
    assert_eq!(probe.seen.get(), 0);

    let rec = reward("c1ccccc1O", &probe, &cfg);
    assert!(rec.valid);
    assert_eq!(probe.seen.get(), 1);
}

#[test]
fn oracle_failure_is_penalised() {
    let probe = Probe::new(Err(OracleError::Timeout(1.0)));
    let rec = reward("c1ccccc1O", &probe, &lenient());
    assert!(!rec.valid && rec.chem_valid);
    assert_eq!(rec.reward, 0.0);
    assert!(rec.failure.unwrap().contains("timed out"));
}

#[test]
fn config_validation() {
    assert!(RewardConfig::default().validate().is_ok());
    let bad_k = RewardConfig {
        k: 1.0,
        ..RewardConfig::default()
    };
    assert_eq!(bad_k.validate(), Err(RewardError::NonNegativeK(1.0)));
    let bad_t = RewardConfig {
        qed_threshold: 1.0,
        ..RewardConfig::default()
    };
    assert_eq!(bad_t.validate(), Err(RewardError::BadThreshold(1.0)));
}

#[test]
fn mock_constant_spec() {
    let spec = MockSpec {
        base: 2.0,
        perturbation: 0.1,
        features: vec![],
    };
    let o = MockOracle::new(7, spec);
    for s in ["C", "CCO", "c1ccccc1", "CC(=O)Nc1ccc(O)cc1"] {
        let v = o.score(s).unwrap();
        assert!((v + 2.0).abs() <= 0.1, "{s}: {v}");
    }
    assert_eq!(o.score("C1CC"), Err(OracleError::InvalidMolecule));
    assert_eq!(o.score("C(C)(C)(C)(C)C"), Err(OracleError::InvalidMolecule));
}

#[test]
fn mock_is_deterministic_and_spelling_blind() {
    let o = MockOracle::new(11, MockSpec::demo());
    let first = o.score("CC(=O)Nc1ccc(O)cc1").unwrap();
    for _ in 0..100 {
        assert_eq!(o.score("CC(=O)Nc1ccc(O)cc1").unwrap(), first);
    }
    assert_eq!(o.score("Oc1ccc(NC(C)=O)cc1").unwrap(), first);
    let other_seed = MockOracle::new(12, MockSpec::demo());
    assert_ne!(other_seed.score("CC(=O)Nc1ccc(O)cc1").unwrap(), first);
}

#[test]
fn mock_full_match_bound() {
    let spec = MockSpec {
        base: 1.0,
        perturbation: 0.05,
        features: vec![
            Feature::ElementCount {
                element: "N".into(),
                target: 1,
                weight: 2.0,
            },
            Feature::RingCount { target: 1, weight: 1.5 },
            Feature::AromaticRings { target: 1, weight: 1.0 },
            Feature::MwWindow {
                lo: 90.0,
                hi: 200.0,
                falloff: 100.0,
                weight: 3.0,
            },
            Feature::HeavyAtomWindow {
                lo: 5.0,
                hi: 15.0,
                falloff: 5.0,
                weight: 0.5,
            },
            Feature::Motif {
                motif: "N".into(),
                weight: 1.0,
            },
        ],
    };
    let bound = -(spec.base + spec.max_strength()) + spec.perturbation;
    let o = MockOracle::new(3, spec);
    let v = o.score("Nc1ccccc1").unwrap();
    assert!(v <= bound && v >= bound - 0.1, "{v} vs {bound}");
    // no ring, no nitrogen, too light
    // ethane: mw 30.07 and 2 heavy atoms sit partly inside the falloffs
    let partial = 3.0 * (1.0 - (90.0 - 30.07) / 100.0) + 0.5 * (1.0 - 3.0 / 5.0);
    let weak = o.score("CC").unwrap();
    assert!((weak + 1.0 + partial).abs() <= 0.05 + 1e-3, "{weak}");
}

#[test]
fn mock_spec_serde() {
    let json = r#"{"base": 2.0, "features": [{"kind": "ring_count", "target": 2, "weight": 1.0}]}"#;
    let spec: MockSpec = serde_json::from_str(json).unwrap();
    assert_eq!(spec.perturbation, 0.1);
    assert_eq!(spec.features[0], Feature::RingCount { target: 2, weight: 1.0 });
    assert!(serde_json::from_str::<MockSpec>(r#"{"base": 2.0, "extra": 1}"#).is_err());
}

#[test]
fn scorer_caches_by_canonical_key() {
    let probe = Probe::new(Ok(-5.0));
    let mut sc = RewardScorer::new(lenient());
    let batch: Vec<String> = ["CCO", "OCC", "C1CC", "CCO", "CCN"].iter().map(|s| s.to_string()).collect();
    let (recs, down) = sc.score_batch(&probe, &batch);
    assert!(!down);
    assert_eq!(probe.seen.get(), 2);
    assert_eq!(sc.oracle_calls(), 1);
    assert_eq!(recs.len(), 5);
    assert!(recs[0].valid && recs[1].valid && !recs[2].valid && recs[3].valid);
    assert_eq!(recs[1].smiles, "OCC");
    assert_eq!(recs[0].reward, recs[3].reward);
    let (_, _) = sc.score_batch(&probe, &batch);
    assert_eq!(probe.seen.get(), 2);
    assert_eq!(sc.oracle_calls(), 1);
    assert_eq!(sc.cache_len(), 2);
}

#[test]
fn scorer_flags_transport_outage_and_does_not_cache_it() {
    let probe = Probe::new(Err(OracleError::SpawnFailure("gone".into())));
    let mut sc = RewardScorer::new(lenient());
    let batch = vec!["CCO".to_string()];
    let (recs, down) = sc.score_batch(&probe, &batch);
    assert!(down);
    assert!(!recs[0].valid);
    assert_eq!(sc.cache_len(), 0);
    let parse = Probe::new(Err(OracleError::ParseFailure("x".into())));
    let (_, down) = sc.score_batch(&parse, &batch);
    assert!(!down);
    // nothing to dock at all is not an outage
    let (_, down) = sc.score_batch(&probe, &["C1CC".to_string()]);
    assert!(!down);
}

#[test]
fn score_line_parsing() {
    let text = "header\nscore 0 -7.5\nscore 2   -3e0\r\nscore 1 nan\nscore 9 -1\n  score 3 abc\n";
    let r = parse_scores(text, 5);
    assert_eq!(r[0], Ok(-7.5));
    assert!(matches!(r[1], Err(OracleError::ParseFailure(_))));
    assert_eq!(r[2], Ok(-3.0));
    assert!(matches!(r[3], Err(OracleError::ParseFailure(_))));
    assert!(matches!(r[4], Err(OracleError::ParseFailure(_))));
}

#[cfg(unix)]
mod external {
    use std::time::Instant;

    use super::super::*;

    fn batch(n: usize) -> Vec<String> {
        ["CCO", "CCN", "c1ccccc1", "CC(C)O", "CCCl"][..n].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn stub_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let o = ExternalOracle::new(
            "awk '{ print \"score\", NR-1, \"-7.5\" }' {in} > {out}",
            dir.path(),
            10.0,
        )
        .unwrap();
        let r = o.score_batch(&batch(5));
        assert_eq!(r, vec![Ok(-7.5); 5]);
        // second batch gets a fresh file pair
        assert_eq!(o.score("CCO"), Ok(-7.5));
    }

    #[test]
    fn stub_missing_index() {
        let dir = tempfile::tempdir().unwrap();
        let o = ExternalOracle::new(
            "awk 'NR != 4 { print \"score\", NR-1, -NR }' {in} > {out}",
            dir.path(),
            10.0,
        )
        .unwrap();
        let r = o.score_batch(&batch(5));
        assert_eq!(r[0], Ok(-1.0));
        assert_eq!(r[2], Ok(-3.0));
        assert!(matches!(r[3], Err(OracleError::ParseFailure(_))));
        assert_eq!(r[4], Ok(-5.0));
    }

    #[test]
    fn stub_hang_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let o = ExternalOracle::new("sleep 30; touch {out} {in}", dir.path(), 0.3).unwrap();
        let t = Instant::now();
        let r = o.score_batch(&batch(2));
        assert!(t.elapsed().as_secs_f64() < 5.0);
        assert!(r.iter().all(|x| matches!(x, Err(OracleError::Timeout(_)))));
    }

    #[test]
    fn failing_command_and_bad_template() {
        let dir = tempfile::tempdir().unwrap();
        let o = ExternalOracle::new("exit 1 # {in} {out}", dir.path(), 5.0).unwrap();
        assert!(matches!(o.score("CCO"), Err(OracleError::SpawnFailure(_))));
        assert!(ExternalOracle::new("dock {in}", dir.path(), 5.0).is_err());
    }

    #[test]
    fn paths_with_spaces_are_quoted() {
        let dir = tempfile::tempdir().unwrap();
        let work = dir.path().join("it's a dir");
        let o = ExternalOracle::new("sed 's/.*/score 0 -2/' {in} > {out}", &work, 5.0).unwrap();
        assert_eq!(o.score("CCO"), Ok(-2.0));
    }
}
