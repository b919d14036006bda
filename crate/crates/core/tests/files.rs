use std::fs;

use qexp_core::{
    generate, load_embeddings, read_scores, read_trials, save_embeddings, score_trials,
    write_scores, write_trials, CohortSpec, EmbeddingFormat, Error,
};

#[test]
fn embeddings_survive_disk_in_every_format() {
    let dir = tempfile::tempdir().unwrap();
    let set = generate(&CohortSpec {
        n_speakers: 5,
        utts_per_speaker: 3,
        dimension: 8,
        ..CohortSpec::default()
    })
    .unwrap();
    for name in ["e.csv", "e.jsonl", "e.ndjson", "e.bin"] {
        let path = dir.path().join(name);
        let fmt = EmbeddingFormat::from_path(&path).unwrap();
        save_embeddings(&set, &path, fmt).unwrap();
        let back = load_embeddings(&path, fmt).unwrap();
        assert_eq!(back.ids(), set.ids(), "{name}");
        assert_eq!(back.dimension(), 8);
        let tol = if fmt == EmbeddingFormat::Binary {
            1e-6
        } else {
            1e-12
        };
        for i in 0..set.len() {
            for (a, b) in set.vector(i).iter().zip(back.vector(i)) {
                assert!((a - b).abs() <= tol * a.abs().max(1.0), "{name}");
            }
        }
    }
    assert_eq!(EmbeddingFormat::from_path("x.txt".as_ref()), None);
    assert!(matches!(
        load_embeddings(dir.path().join("missing.csv"), EmbeddingFormat::Csv),
        Err(Error::Io(_))
    ));
}

#[test]
fn trials_and_scores_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let set = generate(&CohortSpec::default()).unwrap();
    let trials = qexp_core::make_trials(&set, 20, 20, 4).unwrap();
    let tpath = dir.path().join("trials.txt");
    write_trials(&trials, fs::File::create(&tpath).unwrap()).unwrap();
    let read_back = read_trials(fs::File::open(&tpath).unwrap()).unwrap();
    assert_eq!(read_back, trials);

    let scores = score_trials(&set, &read_back).unwrap().scores;
    let spath = dir.path().join("scores.csv");
    write_scores(&scores, fs::File::create(&spath).unwrap()).unwrap();
    let again = read_scores(fs::File::open(&spath).unwrap(), "baseline").unwrap();
    assert_eq!(again.trials(), scores.trials());
    for (a, b) in scores.scores().iter().zip(again.scores()) {
        // six significant digits
        assert!((a - b).abs() <= 5e-6 * a.abs().max(1e-3));
    }
}
