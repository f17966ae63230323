use metaphor_core::promptgen::{retrieve_chunks, Codebook};

const TOY: &str = "# Metaphor\nA metaphor compares two domains.\n\
# Personification\nPersonification gives human traits to objects. Personification is common.\n\
# Simile\nA simile compares using like or as.\n";

#[test]
fn toy_scores_computed_by_hand() {
    let cb = Codebook::parse(TOY);
    assert_eq!(cb.chunks.len(), 3);

    // every term of the personification chunk occurs in that chunk only, so all
    // idf weights are equal: tf vector (3,1,1,1,1,1,1,1), cosine 3/4
    let hits = retrieve_chunks(&cb, "personification", 3).unwrap();
    assert_eq!(hits.iter().map(|h| h.index).collect::<Vec<_>>(), vec![1, 0, 2]);
    assert!((hits[0].score - 0.75).abs() < 1e-12);
    assert_eq!((hits[1].score, hits[2].score), (0.0, 0.0));

    // values frozen from an independent script
    let hits = retrieve_chunks(&cb, "a metaphor compares", 3).unwrap();
    assert_eq!(hits.iter().map(|h| h.index).collect::<Vec<_>>(), vec![0, 2, 1]);
    assert!((hits[0].score - 0.803494082993699).abs() < 1e-12);
    assert!((hits[1].score - 0.2603042174932248).abs() < 1e-12);
}
