//! Times one forward/backward/Adam step of each SkipNet preset.
//!
//! `cargo run --release -p sparsect-neural --example skipnet_timing -- 128`

use std::time::Instant;

use sparsect_neural::{adam_step, AdamConfig, AdamState, SkipNet, SkipNetConfig, Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let size: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(128);
    let only = std::env::args().nth(2);
    for name in ["v1", "v2", "v3"] {
        if only.as_deref().is_some_and(|o| o != name) {
            continue;
        }
        let cfg = SkipNetConfig::by_name(name).unwrap();
        let (net, mut params) = SkipNet::build::<f32>(&cfg)?;
        let mut state = AdamState::new(&params);
        let z = Tensor::<f32>::full(&net.input_shape(size, size), 0.1);
        let steps = std::env::var("STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(3);
        let start = Instant::now();
        for _ in 0..steps {
            let mut tape = Tape::new();
            let vars = params.register(&mut tape);
            let zv = tape.constant(z.clone());
            let out = net.forward(&mut tape, &vars, zv, None)?;
            let sq = tape.square(out);
            let loss = tape.mean(sq);
            let mut grads = tape.backward(loss)?;
            let g = grads.take_all(&vars);
            adam_step(&mut params, &g, &mut state, &AdamConfig::default())?;
        }
        println!(
            "{name}: {} params, {:.3} s/step at {size}x{size}",
            params.num_values(),
            start.elapsed().as_secs_f64() / steps as f64
        );
    }
    Ok(())
}
