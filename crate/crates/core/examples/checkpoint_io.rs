//! Saving and loading checkpoints, and how damaged files are reported.

use otfuse::model::{checkpoint_from_str, checkpoint_to_string, load_checkpoint, mlp_specs, save_checkpoint, Activation, Checkpoint};

pub fn run_example() -> otfuse::Result<()> {
    let ckpt = Checkpoint::init(&mlp_specs(&[2, 3, 2], Activation::Tanh), 4)?;
    let path = std::env::temp_dir().join("otfuse_checkpoint_example.json");
    save_checkpoint(&ckpt, &path)?;
    let back = load_checkpoint(&path)?;
    assert_eq!(back, ckpt);
    println!("{} parameters round-tripped through {}", ckpt.num_params(), path.display());

    let text = checkpoint_to_string(&ckpt);
    let damaged = [
        ("truncated", text[..text.len() / 2].to_string()),
        ("future version", text.replacen("\"format_version\": 1", "\"format_version\": 9", 1)),
        ("wrong width", text.replacen("\"out_dim\": 3", "\"out_dim\": 4", 1)),
    ];
    for (what, body) in damaged {
        let err = checkpoint_from_str(&body).unwrap_err();
        println!("{what:<15} -> {} ({err})", err.code());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("checkpoint_io example failed");
}
