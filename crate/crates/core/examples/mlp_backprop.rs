//! A small MLP trained with masked cross-entropy on one synthetic task, with a
//! finite-difference check of one gradient entry.
//!
//! cargo run --example mlp_backprop

use fedprotip::data::{generate_class_incremental, GeneratorConfig};
use fedprotip::model::{Activation, ModelParams, ModelSpec};

fn main() -> fedprotip::Result<()> {
    let stream = generate_class_incremental(&GeneratorConfig {
        num_tasks: 1,
        classes_per_task: 3,
        samples_per_class: 40,
        input_dim: 6,
        class_separation: 4.0,
        noise_std: 1.0,
        seed: 5,
    })?;
    let task = &stream.tasks[0];
    let spec = ModelSpec { layer_dims: vec![6, 16, 16], activation: Activation::Tanh, freeze_first_n_layers: 0 };
    let mut params = ModelParams::init(&spec, 1)?.expand_head(task.classes.len(), 2)?;

    let x = task.gather(&task.train);
    let targets: Vec<usize> = task.labels_of(&task.train).iter().map(|&l| task.local_class(l).unwrap()).collect();

    for step in 0..=200 {
        let trace = params.forward(&x, true)?;
        let (grads, loss) = params.backward(&trace, &targets, 0)?;
        if step % 50 == 0 {
            println!("step {step:>3}  loss {loss:.5}");
        }
        params = params.sgd_step(&grads, 0.1, 0.0)?;
    }

    // Central difference on the first hidden weight.
    let h = 1e-5;
    let loss_at = |p: &ModelParams| -> fedprotip::Result<f64> {
        Ok(p.backward(&p.forward(&x, true)?, &targets, 0)?.1)
    };
    let (grads, _) = params.backward(&params.forward(&x, true)?, &targets, 0)?;
    let (mut plus, mut minus) = (params.clone(), params.clone());
    plus.hidden_weights[0].as_mut_slice()[0] += h;
    minus.hidden_weights[0].as_mut_slice()[0] -= h;
    let numeric = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
    let analytic = grads.hidden_grads[0].as_slice()[0];
    println!("∂L/∂W[0][0,0]  analytic {analytic:.8e}  numeric {numeric:.8e}");
    Ok(())
}
