//! Trains an in-domain and a broad-data model on the two-domain synthetic
//! task, then compares direct averaging with aligned averaging, before and
//! after a short fine-tuning phase.

use otfuse::fusion::{align, direct_average, fuse, otf_pipeline, AlignmentOptions};
use otfuse::model::{
    evaluate, finetune, gen_synthetic, mlp_specs, train, Activation, SyntheticConfig, TrainConfig,
};

pub fn run_example() -> otfuse::Result<()> {
    let data = gen_synthetic(&SyntheticConfig::two_domain(4.0), 0)?;
    let union = data.train_union();
    let heldout = data.heldout_union();
    let specs = mlp_specs(&[8, 32, 32, 4], Activation::Relu);

    let cfg = TrainConfig::default().with_epochs(100);
    let in_domain = train(&specs, &data.train[0], &cfg.with_seed(1))?;
    let broad = train(&specs, &union, &cfg.with_seed(2))?;

    let opts = AlignmentOptions::default();
    let aligned = align(&in_domain, &broad, &opts)?;
    println!("per-layer transport cost: {:?}", aligned.objectives.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>());

    let mft = TrainConfig::finetune().with_seed(3);
    let direct = direct_average(&in_domain, &broad, opts.lambda)?;
    let fused = fuse(&aligned.aligned, &broad, opts.lambda)?;
    let rows = [
        ("in-domain", in_domain.clone()),
        ("broad", broad.clone()),
        ("direct average", direct.clone()),
        ("direct average + fine-tune", finetune(&direct, &union, &mft)?),
        ("aligned average", fused),
        ("aligned average + fine-tune", otf_pipeline(&in_domain, &broad, &opts, &union, &mft)?),
    ];
    println!("{:<28} {:>9} {:>9}", "model", "loss", "accuracy");
    for (name, model) in &rows {
        let e = evaluate(model, &heldout)?;
        println!("{name:<28} {:>9.4} {:>9.4}", e.loss, e.accuracy);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("fuse_two_models example failed");
}
