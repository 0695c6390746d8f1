//! Loss along the straight line from the initialization to the trained
//! weights, written as a CSV curve.

use otfuse::eval::{landscape, DEFAULT_LANDSCAPE_POINTS};
use otfuse::model::{gen_synthetic, mlp_specs, train, Activation, Checkpoint, SyntheticConfig, TrainConfig};

pub fn run_example() -> otfuse::Result<()> {
    let data = gen_synthetic(&SyntheticConfig::two_domain(4.0), 2)?;
    let specs = mlp_specs(&[8, 24, 4], Activation::Relu);
    let cfg = TrainConfig::default().with_epochs(60).with_seed(9);
    let init = Checkpoint::init(&specs, cfg.seed)?;
    let trained = train(&specs, &data.train_union(), &cfg)?;

    let curve = landscape(&init, &trained, &data.heldout_union(), DEFAULT_LANDSCAPE_POINTS)?;
    print!("{}", curve.to_csv());
    let path = std::env::temp_dir().join("otfuse_landscape.csv");
    curve.write_csv(&path)?;
    println!("curve written to {}", path.display());
    assert!(curve.losses.last() < curve.losses.first());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("loss_landscape example failed");
}
