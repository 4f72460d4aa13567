use super::*;
use crate::chem::{compute_descriptors, parse_smiles, TokenSequence, Vocabulary};
use crate::generator::{ModelConfig, ModelParams};

fn vocab() -> &'static Vocabulary {
    Vocabulary::builtin()
}

#[test]
fn corpus_filters_and_counts() {
    let c = parse_corpus("CCO\nc1ccccc1\nC1CC\n\nCCN\nOCC\n", vocab(), 100);
    assert_eq!(c.smiles, vec!["CCO", "c1ccccc1", "CCN", "OCC"]);
    assert_eq!(c.skipped, 1);
    let crlf = parse_corpus("CCO\r\nc1ccccc1\r\nC1CC\r\n\r\nCCN\r\nOCC\r\n", vocab(), 100);
    assert_eq!(crlf, c);
    // digit 0 is outside the vocabulary
    assert_eq!(parse_corpus("C0C\n", vocab(), 100).skipped, 1);
    assert_eq!(parse_corpus("CCCCCC\n", vocab(), 3).skipped, 1);
}

#[test]
fn corpus_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.smi");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(load_corpus(&empty, vocab(), 100), Err(DataError::EmptyAfterFiltering(_))));
    let missing = dir.path().join("nope.smi");
    match load_corpus(&missing, vocab(), 100) {
        Err(DataError::Io { path, .. }) => assert!(path.ends_with("nope.smi")),
        other => panic!("{other:?}"),
    }
    let p = dir.path().join("c.smi");
    save_corpus(&p, &["CCO".into(), "CCN".into()]).unwrap();
    assert_eq!(load_corpus(&p, vocab(), 100).unwrap().smiles, vec!["CCO", "CCN"]);
}

#[test]
fn synthetic_corpus_is_valid_distinct_and_seeded() {
    let a = synth_corpus(200, 5).unwrap();
    assert_eq!(a, synth_corpus(200, 5).unwrap());
    assert_ne!(a, synth_corpus(200, 6).unwrap());
    let keys: std::collections::BTreeSet<String> = a
        .iter()
        .map(|s| crate::chem::canonical_key(&parse_smiles(s).unwrap()))
        .collect();
    assert_eq!(keys.len(), 200);
    let c = parse_corpus(&a.join("\n"), vocab(), TokenSequence::DEFAULT_MAX_LEN);
    assert_eq!(c.skipped, 0);
}

#[test]
fn triplets_are_seeded_and_constructed() {
    let corpus = synth_corpus(20, 1).unwrap();
    let spec = TripletSpec {
        gene_count: 16,
        seed: 3,
        ..TripletSpec::default()
    };
    let a = synth_triplets(&corpus, &spec).unwrap();
    let b = synth_triplets(&corpus, &spec).unwrap();
    assert_eq!(triplets_text(&a, 16, 3).unwrap(), triplets_text(&b, 16, 3).unwrap());
    assert_eq!(a[0].unperturbed, a[4].unperturbed);
    assert_ne!(a[0].unperturbed, a[1].unperturbed);

    let quiet = TripletSpec { noise: 0.0, ..spec.clone() };
    for (s, r) in corpus.iter().zip(synth_triplets(&corpus, &quiet).unwrap()) {
        let d = quiet.delta(&compute_descriptors(&parse_smiles(&crate::chem::canonical_key(&parse_smiles(s).unwrap())).unwrap()));
        for ((p, u), d) in r.perturbed.iter().zip(&r.unperturbed).zip(&d) {
            // one rounding in the addition is all that separates them
            assert!(((p - u) - d).abs() <= 4.0 * f64::EPSILON * u.abs().max(d.abs()), "{p} {u} {d}");
        }
    }
    // same descriptors, same delta: two spellings of one molecule
    let twins = synth_triplets(&["OCC".to_string(), "CCO".to_string()], &TripletSpec { cell_lines: 1, ..quiet.clone() }).unwrap();
    assert_eq!(twins[0].perturbed, twins[1].perturbed);

    assert!(synth_triplets(&corpus, &TripletSpec { gene_count: 7, ..spec.clone() }).is_err());
    assert!(synth_triplets(&[], &spec).is_err());
}

#[test]
fn triplet_text_round_trip() {
    let corpus = synth_corpus(6, 2).unwrap();
    let spec = TripletSpec {
        gene_count: 8,
        seed: 9,
        ..TripletSpec::default()
    };
    let recs = synth_triplets(&corpus, &spec).unwrap();
    let text = triplets_text(&recs, 8, 9).unwrap();
    assert!(text.starts_with("# G=8 count=6 seed=9 source=synthetic\n"));
    let (back, g, seed) = parse_triplets(&text).unwrap();
    assert_eq!((g, seed), (8, 9));
    assert_eq!(back, recs);
    let crlf = text.replace('\n', "\r\n");
    assert_eq!(parse_triplets(&crlf).unwrap().0, recs);

    let imported = "# G=8 count=1 seed=0\nCCO\t1 2 3 4 5 6 7 8\t0 0 0 0 0 0 0 0\n";
    let (r, _, _) = parse_triplets(imported).unwrap();
    assert_eq!(r[0].provenance, Provenance::Imported);
    assert_eq!(to_training(&r, vocab(), 100).unwrap()[0].delta()[7], 8.0);

    for bad in [
        "G=8 count=1 seed=0\n",
        "# G=8 count=2 seed=0\nCCO\t1 2 3 4 5 6 7 8\t0 0 0 0 0 0 0 0\n",
        "# G=8 count=1 seed=0\nCCO\t1 2 3\t0 0 0 0 0 0 0 0\n",
        "# G=8 count=1 seed=0\nCCO\t1 2 3 4 5 6 7 x\t0 0 0 0 0 0 0 0\n",
        "# G=8 count=1 seed=0 color=red\n",
    ] {
        assert!(parse_triplets(bad).is_err(), "{bad}");
    }
}

fn model(v: &Vocabulary) -> ModelParams {
    let mc = ModelConfig {
        gene_count: 8,
        latent_dim: 3,
        hidden: 5,
        embed_dim: 4,
        exp_hidden: vec![6],
        vocab_size: v.len(),
        ..ModelConfig::default()
    };
    ModelParams::init(&mc, 17)
}

#[test]
fn checkpoint_round_trip_and_guards() {
    let v = vocab();
    let p = model(v);
    let bytes = checkpoint_bytes(&p, v);
    let back = params_from_bytes(&bytes, v).unwrap();
    assert_eq!(back, p);
    for (a, b) in back.tensors().iter().zip(p.tensors()) {
        let bits = |t: &crate::nn::Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    assert_eq!(checkpoint_bytes(&back, v), bytes);

    let truncated = &bytes[..bytes.len() - 10];
    assert!(matches!(params_from_bytes(truncated, v), Err(DataError::CorruptFile(_))));
    let mut flipped = bytes.clone();
    flipped[200] ^= 1;
    assert!(matches!(params_from_bytes(&flipped, v), Err(DataError::CorruptFile(_))));
    let mut version = bytes.clone();
    version[8] = 7;
    assert_eq!(
        params_from_bytes(&version, v),
        Err(DataError::VersionMismatch { expected: 1, found: 7 })
    );
    assert!(matches!(params_from_bytes(b"hello", v), Err(DataError::CorruptFile(_))));

    let mut tokens: Vec<String> = v.tokens().to_vec();
    tokens.push("[Se]".into());
    let bigger = Vocabulary::from_tokens(tokens).unwrap();
    assert_eq!(bigger.len(), 41);
    assert!(matches!(params_from_bytes(&bytes, &bigger), Err(DataError::VocabularyMismatch { .. })));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&p, v, &path).unwrap();
    assert_eq!(load_checkpoint(&path, v).unwrap(), p);
}

#[test]
fn manifest_verifies_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("out.txt");
    std::fs::write(&f, "abc").unwrap();
    let mut m = RunManifest::new("sample", 3, "{}");
    m.outputs.push(ArtifactHash {
        path: "out.txt".into(),
        sha256: file_sha256(&f).unwrap(),
    });
    assert_eq!(
        m.outputs[0].sha256,
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
    m.verify(dir.path()).unwrap();
    let mp = dir.path().join("manifest.json");
    m.save(&mp).unwrap();
    assert_eq!(RunManifest::load(&mp).unwrap(), m);
    std::fs::write(&f, "abd").unwrap();
    assert!(m.verify(dir.path()).is_err());
}

#[test]
fn profile_text_parsing() {
    let rows = parse_profiles("# header\n0.5 -1 2e-1\n\n  1 2 3  \n").unwrap();
    assert_eq!(rows, vec![vec![0.5, -1.0, 0.2], vec![1.0, 2.0, 3.0]]);
    assert!(parse_profiles("").unwrap().is_empty());
    for bad in ["1 2\n3", "1 x", "1 NaN", "1 inf"] {
        assert!(matches!(parse_profiles(bad), Err(DataError::Format { .. })), "{bad}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.txt");
    std::fs::write(&path, "# nothing\n").unwrap();
    assert!(matches!(load_profiles(&path), Err(DataError::EmptyAfterFiltering(_))));
}
