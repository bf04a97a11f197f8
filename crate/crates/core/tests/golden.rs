//! Byte-for-byte checks against frozen files in tests/golden/.
//!
//! Set `ICS_BLESS=1` to rewrite the embedding golden after an intended change.

use std::path::PathBuf;

use ics_core::datasets::Datum;
use ics_core::embedding::{EmbeddingProvider, HashEmbeddingProvider};
use ics_core::prompt::{default_template, render, Demonstration};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn demo(d: Datum) -> Demonstration {
    Demonstration::new(d).unwrap()
}

pub fn nli_case() -> (Vec<Demonstration>, Datum) {
    let demos = vec![
        demo(Datum::nli(
            "d1",
            "A man in a blue shirt is riding a bicycle down a busy street.",
            "A person is riding a bike.",
            Some("entailment"),
        )),
        demo(Datum::nli(
            "d2",
            "Two children are playing with a red ball in the park.",
            "The children are asleep in their beds.",
            Some("contradiction"),
        )),
        demo(Datum::nli(
            "d3",
            "A woman is slicing vegetables in a small kitchen.",
            "She is cooking dinner for her family.",
            Some("neutral"),
        )),
    ];
    let target = Datum::nli(
        "t1",
        "An old dog is lying on a porch in the afternoon sun.",
        "An animal is resting.",
        Some("entailment"),
    );
    (demos, target)
}

#[test]
fn nli_prompt_matches_golden() {
    let (demos, target) = nli_case();
    let p = render(&default_template("esnli").unwrap(), &demos, &target, 3).unwrap();
    assert_eq!(
        p.rendered,
        std::fs::read_to_string(golden("nli_prompt.txt")).unwrap()
    );
}

#[test]
fn qa_prompt_matches_golden() {
    let demos = vec![
        demo(Datum::qa(
            "q1",
            "Where would you put a plate after washing it?",
            &["cupboard", "oven", "garden", "car", "shoe"],
            Some("a"),
        )),
        demo(Datum::qa(
            "q2",
            "What do people use to cut paper?",
            &["spoon", "pillow", "scissors", "cloud", "river"],
            Some("c"),
        )),
    ];
    let target = Datum::qa(
        "q3",
        "What is usually found at the top of a birthday cake?",
        &["candles", "tires", "bricks", "keys", "ladders"],
        Some("a"),
    );
    let p = render(&default_template("cqa").unwrap(), &demos, &target, 2).unwrap();
    assert_eq!(
        p.rendered,
        std::fs::read_to_string(golden("qa_prompt.txt")).unwrap()
    );
}

#[test]
fn reordering_demonstrations_changes_bytes() {
    let (mut demos, target) = nli_case();
    let t = default_template("esnli").unwrap();
    let a = render(&t, &demos, &target, 3).unwrap().rendered;
    demos.swap(0, 2);
    let b = render(&t, &demos, &target, 3).unwrap().rendered;
    assert_ne!(a, b);
}

#[test]
fn hash_embedding_matches_golden() {
    let v = HashEmbeddingProvider::new(8, 0).embed_raw("abc").unwrap();
    let text = serde_json::to_string_pretty(&v).unwrap() + "\n";
    let path = golden("hash_embedding_abc_dim8_seed0.json");
    if std::env::var_os("ICS_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(&path).unwrap());
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
}
