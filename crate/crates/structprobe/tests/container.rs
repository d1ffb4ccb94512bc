mod common;

use proptest::prelude::*;
use structprobe::container::{skip_log_path, SkippedSentence};
use structprobe::run::read_treebank;
use structprobe::{
    align, read_container, write_container, ContainerError, EmbeddingSet, SentenceEmbeddings,
};

fn small_set() -> EmbeddingSet {
    let mut set = EmbeddingSet::new("toy", 2, 4, true);
    set.sentences.push(SentenceEmbeddings {
        sent_id: "s1".into(),
        token_count: 3,
        vectors: (0..24).map(|i| (i as f32).sin()).collect(),
    });
    set.sentences.push(SentenceEmbeddings {
        sent_id: "s2".into(),
        token_count: 1,
        vectors: vec![
            1e-30,
            -0.0,
            f32::MAX,
            f32::MIN_POSITIVE,
            7.0,
            -7.5,
            0.25,
            3.0,
        ],
    });
    set
}

fn bits(set: &EmbeddingSet) -> Vec<Vec<u32>> {
    set.sentences
        .iter()
        .map(|s| s.vectors.iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.spb");
    let set = small_set();
    write_container(&set, &path).unwrap();
    let back = read_container(&path).unwrap();
    assert_eq!(back, set);
    assert_eq!(bits(&back), bits(&set));
}

#[test]
fn bytes_are_deterministic() {
    assert_eq!(
        small_set().to_bytes().unwrap(),
        small_set().to_bytes().unwrap()
    );
}

#[test]
fn every_payload_byte_flip_is_a_checksum_error() {
    let bytes = small_set().to_bytes().unwrap();
    let header_end = 12 + u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    for at in header_end..bytes.len() - 4 {
        let mut bad = bytes.clone();
        bad[at] ^= 0x10;
        match EmbeddingSet::from_bytes(&bad) {
            Err(ContainerError::ChecksumMismatch { .. }) => {}
            other => panic!("byte {at}: {other:?}"),
        }
    }
}

#[test]
fn every_truncation_is_detected() {
    let bytes = small_set().to_bytes().unwrap();
    for len in 0..bytes.len() {
        let err = EmbeddingSet::from_bytes(&bytes[..len]).unwrap_err();
        assert!(
            matches!(
                err,
                ContainerError::Truncated { .. } | ContainerError::Header(_)
            ),
            "length {len}: {err:?}"
        );
    }
}

#[test]
fn distinct_errors() {
    let good = small_set().to_bytes().unwrap();

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(
        EmbeddingSet::from_bytes(&magic),
        Err(ContainerError::BadMagic(_))
    ));

    let mut version = good.clone();
    version[4] = 9;
    assert!(matches!(
        EmbeddingSet::from_bytes(&version),
        Err(ContainerError::UnsupportedVersion(9))
    ));

    // NaN with a matching checksum is still rejected
    let header_end = 12 + u32::from_le_bytes(good[8..12].try_into().unwrap()) as usize;
    let mut nan = good.clone();
    nan[header_end + 4 * 5..header_end + 4 * 6].copy_from_slice(&f32::NAN.to_le_bytes());
    let crc = crc32fast::hash(&nan[header_end..nan.len() - 4]);
    let n = nan.len();
    nan[n - 4..].copy_from_slice(&crc.to_le_bytes());
    match EmbeddingSet::from_bytes(&nan) {
        Err(ContainerError::NonFinite {
            sent_id,
            layer,
            token,
        }) => {
            assert_eq!((sent_id.as_str(), layer, token), ("s1", 0, 1));
        }
        other => panic!("{other:?}"),
    }

    let mut trailing = good.clone();
    trailing.push(0);
    assert!(matches!(
        EmbeddingSet::from_bytes(&trailing),
        Err(ContainerError::Header(_))
    ));
}

#[test]
fn writer_rejects_invalid_sets() {
    let mut set = small_set();
    set.sentences[0].vectors[0] = f32::INFINITY;
    assert!(matches!(
        set.to_bytes(),
        Err(ContainerError::NonFinite { .. })
    ));

    let mut set = small_set();
    set.sentences[1].sent_id = "s1".into();
    assert!(matches!(set.to_bytes(), Err(ContainerError::Header(_))));

    let mut set = small_set();
    set.sentences[0].vectors.pop();
    assert!(matches!(set.to_bytes(), Err(ContainerError::Header(_))));
}

#[test]
fn skip_log_sidecar_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.spb");
    let mut set = small_set();
    set.skipped.push(SkippedSentence {
        sent_id: "long-1".into(),
        reason: "exceeds 512 subwords".into(),
    });
    write_container(&set, &path).unwrap();
    assert!(skip_log_path(&path).exists());
    assert_eq!(read_container(&path).unwrap(), set);

    set.skipped.clear();
    write_container(&set, &path).unwrap();
    assert!(!skip_log_path(&path).exists());
}

#[test]
fn fixture_container_matches_treebank_token_counts() {
    let set = common::fixture_embeddings(2, 1, 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.spb");
    write_container(&set, &path).unwrap();
    let set = read_container(&path).unwrap();
    for split in ["train", "dev", "test"] {
        let tb = read_treebank(&common::fixture(&format!("{split}.conllu"))).unwrap();
        let al = align(&set, &tb).unwrap();
        assert_eq!(al.sentences.len(), tb.len());
        assert!(al.missing.is_empty());
    }
}

fn arb_set() -> impl Strategy<Value = EmbeddingSet> {
    (
        1usize..4,
        1usize..5,
        any::<bool>(),
        prop::collection::vec(1usize..6, 0..5),
    )
        .prop_flat_map(|(layers, dim, contextual, counts)| {
            let sizes: Vec<usize> = counts.iter().map(|t| layers * t * dim).collect();
            let vectors = sizes
                .into_iter()
                .map(|n| prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::ZERO, n))
                .collect::<Vec<_>>();
            (Just((layers, dim, contextual, counts)), vectors)
        })
        .prop_map(|((layers, dim, contextual, counts), vectors)| {
            let mut set = EmbeddingSet::new("prop model \"q\"", layers, dim, contextual);
            set.include_special_tokens_in_pooling = !contextual;
            for (i, (t, v)) in counts.into_iter().zip(vectors).enumerate() {
                set.sentences.push(SentenceEmbeddings {
                    sent_id: format!("id-{i}"),
                    token_count: t,
                    vectors: v,
                });
            }
            set
        })
}

proptest! {
    #[test]
    fn round_trip_identity(set in arb_set()) {
        let back = EmbeddingSet::from_bytes(&set.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(bits(&back), bits(&set));
        prop_assert_eq!(back, set);
    }
}
