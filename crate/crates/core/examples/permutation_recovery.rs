//! Shuffles the hidden units of a network and lets the aligner undo it.

use otfuse::fusion::{align, AlignmentOptions};
use otfuse::model::{forward, mlp_specs, permute_hidden, Activation, Checkpoint};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> otfuse::Result<()> {
    let specs = mlp_specs(&[10, 16, 16, 5], Activation::Relu);
    let reference = Checkpoint::init(&specs, 11)?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let perms: Vec<Vec<usize>> = [16, 16]
        .iter()
        .map(|&m| {
            let mut p: Vec<usize> = (0..m).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let twin = permute_hidden(&reference, &perms)?;
    println!("weight distance before alignment: {:.4}", twin.max_abs_diff(&reference));

    let result = align(&twin, &reference, &AlignmentOptions::default())?;
    for (l, map) in result.maps.iter().enumerate() {
        let p = map.as_permutation().expect("exact maps are permutations");
        println!("layer {l}: twin unit i goes to slot {:?}", p);
        // The twin's unit perms[l][i] is the reference's unit i.
        if l < perms.len() {
            assert!(perms[l].iter().enumerate().all(|(i, &j)| p[j] == i));
        }
    }
    let diff = result.aligned.max_abs_diff(&reference);
    println!("weight distance after alignment: {diff:e}");

    let x = [0.2, -0.4, 1.0, 0.0, 0.7, -1.3, 0.5, 0.5, -0.1, 0.9];
    let (y_ref, y_twin) = (forward(&reference, &x)?, forward(&result.aligned, &x)?);
    println!("logits reference {:?}", y_ref.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>());
    println!("logits aligned   {:?}", y_twin.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>());
    assert_eq!(diff, 0.0);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("permutation_recovery example failed");
}
