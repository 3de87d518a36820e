// Compares backpropagated gradients of both model parts with central
// finite differences.

use fedprune::data::synth_blobs;
use fedprune::model::{ModelSpec, PartitionedModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let ds = synth_blobs(4, 3, 5, 6, 0.5);
    let idx: Vec<usize> = (0..ds.len()).collect();
    let batch = ds.batch(&idx);
    let model = PartitionedModel::init(ModelSpec::mlp(6, 5, 3), 9)?;
    let g = model.backward(&batch)?;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for personalized in [true, false] {
        let (n, grad) = if personalized {
            (model.personalized_params.len(), &g.grad_personalized)
        } else {
            (model.global_params.len(), &g.grad_global)
        };
        for (j, &an) in grad.iter().enumerate().take(n) {
            let mut plus = model.clone();
            let mut minus = model.clone();
            if personalized {
                plus.personalized_params[j] += h;
                minus.personalized_params[j] -= h;
            } else {
                plus.global_params[j] += h;
                minus.global_params[j] -= h;
            }
            let fd = (plus.forward_loss(&batch)? - minus.forward_loss(&batch)?) / (2.0 * h);
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
            worst = worst.max(rel);
        }
        println!(
            "{} part: {n} coordinates checked",
            if personalized {
                "personalized"
            } else {
                "global"
            }
        );
    }
    println!("largest relative error {worst:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
