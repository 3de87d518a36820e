// Synthetic blobs split across devices by label, plus an IDX round trip.

use fedprune::data::{load_idx, partition_noniid, synth_blobs, write_idx};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let ds = synth_blobs(2, 10, 50, 8, 0.3);
    let part = partition_noniid(&ds, 10, 2, 2)?;
    for k in 0..part.devices() {
        println!(
            "device {k}: {:>3} samples, labels {:?}",
            part.device_indices[k].len(),
            part.label_set(k, &ds)
        );
    }
    println!("{} of {} samples assigned", part.assigned(), ds.len());

    let dir = tempfile::tempdir()?;
    let (images, labels) = (
        dir.path().join("x.idx3-ubyte"),
        dir.path().join("y.idx1-ubyte"),
    );
    write_idx(&ds, 2, 4, &images, &labels)?;
    let back = load_idx(&images, &labels)?;
    let worst = ds
        .inputs()
        .iter()
        .zip(back.inputs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert_eq!(back.labels(), ds.labels());
    println!(
        "IDX round trip: {} samples, largest pixel error {worst:.4}",
        back.len()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
