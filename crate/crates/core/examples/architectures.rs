//! The six classifiers side by side: layout, parameter count and a forward
//! pass on the same random window. Ends with a checkpoint round trip.
//!
//!     cargo run --release --example architectures

use sfgru::gradcheck::random_input;
use sfgru::{FeatureKey, Model, ModelKind, ModelSpec, Rng};

fn main() -> sfgru::Result<()> {
    let mut rng = Rng::new(1);
    println!("{:<8} {:>10}  {:<28} {:<22} head", "model", "params", "levels", "streams");
    for kind in ModelKind::ALL {
        let spec = ModelSpec {
            hidden_dim: 32,
            ..ModelSpec::with_defaults(kind)
        };
        let model = Model::init(spec.clone(), &mut rng.fork(kind as u64))?;
        let x = random_input(&spec, &mut rng.fork(100));
        let out = model.forward(&x)?;
        println!(
            "{:<8} {:>10}  {:<28} {:<22} {:>4}  p = {:.4}",
            kind.as_str(),
            spec.param_count(),
            format!("{:?}", spec.level_input_dims()),
            format!("{:?}", spec.stream_input_dims()),
            spec.classifier_input_dim(),
            out.prob
        );
    }

    // Reordering the levels changes every level's input width.
    let order = vec![FeatureKey::S, FeatureKey::B, FeatureKey::Cp, FeatureKey::Cs, FeatureKey::P];
    let spec = ModelSpec::new(ModelKind::StackedFusionGru, order.clone(), 256, 15)?;
    println!("\nsf-gru {} levels: {:?}", FeatureKey::join(&order, "-"), spec.level_input_dims());

    let spec = ModelSpec {
        hidden_dim: 8,
        obs_len: 4,
        ..ModelSpec::sf_gru()
    };
    let model = Model::init(spec.clone(), &mut rng)?;
    let restored = Model::from_checkpoint_json(&model.to_checkpoint_json()?)?;
    let x = random_input(&spec, &mut rng);
    println!(
        "checkpoint round trip: identical parameters {}, identical output {}",
        restored == model,
        restored.forward(&x)?.prob == model.forward(&x)?.prob
    );
    Ok(())
}
