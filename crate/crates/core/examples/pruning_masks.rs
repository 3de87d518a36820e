// Importance masks on two devices and the server average over the
// coordinates each device kept.

use fedprune::data::synth_blobs;
use fedprune::fedsim::{aggregate_global, Upload};
use fedprune::model::{apply_mask, build_mask, importance_scores, ModelSpec, PartitionedModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let ds = synth_blobs(1, 3, 20, 4, 0.4);
    let server = PartitionedModel::init(ModelSpec::mlp(4, 4, 3), 1)?;
    let u_g = server.global_params.clone();

    let mut uploads = Vec::new();
    for (k, rho) in [(0usize, 0.3), (1, 0.6)] {
        let idx: Vec<usize> = (0..ds.len()).filter(|i| i % 2 == k).collect();
        let batch = ds.batch(&idx);

        // One unmasked probe step ranks the global weights.
        let mut probe = server.clone();
        probe.global_step(&batch, 0.1)?;
        let scores = importance_scores(&probe.global_params, &u_g)?;
        let mask = build_mask(&scores, rho);

        let mut local = server.clone();
        apply_mask(&mut local, &mask)?;
        for _ in 0..3 {
            local.global_step_masked(&batch, 0.1, &mask)?;
        }
        println!(
            "device {k}: rho {rho}, kept {}/{} weights, {} zeros in upload",
            mask.retained(),
            mask.len(),
            local.global_params.iter().filter(|w| **w == 0.0).count()
        );
        uploads.push(Upload {
            global: local.global_params,
            mask,
        });
    }

    let next = aggregate_global(&uploads, &u_g)?;
    let kept_by = |j: usize| uploads.iter().filter(|u| u.mask.bits()[j]).count();
    let counts: Vec<usize> = (0..next.len()).map(kept_by).collect();
    for c in 0..=2 {
        println!(
            "{} coordinates averaged over {c} devices",
            counts.iter().filter(|&&n| n == c).count()
        );
    }
    let unchanged = (0..next.len())
        .filter(|&j| counts[j] == 0 && next[j] == u_g[j])
        .count();
    println!("{unchanged} coordinates nobody kept stay at their previous value");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
