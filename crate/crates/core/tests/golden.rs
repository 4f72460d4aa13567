//! Checks against reference values produced by the scripts in `scripts/`.

use std::collections::BTreeSet;
use std::path::PathBuf;

use phenogen::chem::{canonical_key, check_valence, parse_smiles, qed, DescriptorVector, QedParams};
use phenogen::metrics::internal_diversity;
use phenogen::nn::{AdamConfig, AdamState};
use phenogen::Tensor;

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.is_empty() && !l.starts_with('#'))
}

#[test]
fn adam_on_square_matches_reference_trajectory() {
    let mut params = vec![Tensor::scalar(1.0)];
    let mut opt = AdamState::new(&params, AdamConfig::with_lr(0.1));
    for line in data_lines(&golden("adam_w2.txt")) {
        let mut it = line.split_whitespace();
        let step: u64 = it.next().unwrap().parse().unwrap();
        let want: f64 = it.next().unwrap().parse().unwrap();
        let g = Tensor::scalar(2.0 * params[0].item());
        opt.step(&mut params, &[g], &[]).unwrap();
        assert_eq!(opt.step, step);
        let got = params[0].item();
        assert!((got - want).abs() <= 1e-12, "step {step}: {got} vs {want}");
    }
}

#[test]
fn internal_diversity_matches_reference() {
    let text = golden("diversity5.txt");
    let header = text.lines().next().unwrap();
    let smiles: Vec<&str> = header.trim_start_matches("# smiles:").split_whitespace().collect();
    let want: f64 = data_lines(&text).next().unwrap().trim().parse().unwrap();
    let got = internal_diversity(&smiles, 1024, true).unwrap();
    assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
}

#[test]
fn qed_matches_reference_values() {
    let params = QedParams::builtin();
    let mut n = 0;
    for line in data_lines(&golden("qed_reference.txt")) {
        let f: Vec<f64> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
        let d = DescriptorVector {
            mw: f[0],
            logp_proxy: f[1],
            hba: f[2] as u32,
            hbd: f[3] as u32,
            psa_proxy: f[4],
            rot_bonds: f[5] as u32,
            arom_rings: f[6] as u32,
            heavy_atoms: 0,
            alerts: f[7] as u32,
        };
        let got = qed(&d, params).unwrap();
        assert!((got - f[8]).abs() <= 1e-12, "{line}: got {got}");
        n += 1;
    }
    assert_eq!(n, 4);
}

#[test]
fn every_isobutane_spelling_has_one_key() {
    let text = golden("isobutane_spellings.txt");
    let keys: BTreeSet<String> = data_lines(&text)
        .map(|s| canonical_key(&parse_smiles(s).unwrap_or_else(|e| panic!("{s}: {e}"))))
        .collect();
    assert_eq!(data_lines(&text).count(), 48);
    assert_eq!(keys.len(), 1, "{keys:?}");
    assert_eq!(keys.into_iter().next().unwrap(), canonical_key(&parse_smiles("CC(C)C").unwrap()));
}

#[test]
fn short_strings_agree_with_enumeration_oracle() {
    let text = golden("valence_len4.tsv");
    let mut mismatches = Vec::new();
    let mut total = 0;
    for line in text.lines() {
        let (s, want) = line.split_once('\t').unwrap();
        let got = match parse_smiles(s) {
            Err(_) => "unparseable",
            Ok(g) if check_valence(&g).valid => "valid",
            Ok(_) => "invalid",
        };
        if got != want {
            mismatches.push(format!("{s}: {got} vs {want}"));
        }
        total += 1;
    }
    assert_eq!(total, 2800);
    assert!(mismatches.is_empty(), "{} mismatches: {:?}", mismatches.len(), &mismatches[..mismatches.len().min(20)]);
}
