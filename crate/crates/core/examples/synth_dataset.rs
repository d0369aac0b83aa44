//! Generate the synthetic factor dataset, check that the factors are independent,
//! save it in the raw format and write a preview sheet.
//!
//! ```text
//! cargo run --release --example synth_dataset -- [out-dir] [n] [seed]
//! ```

use std::path::PathBuf;

use vlac::data::{chi_square_independence, load_raw, save_raw, synth_generate, tile_sheet, FactorSpec, FACTOR_NAMES};

fn main() -> vlac::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synth-out".into()));
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4000);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let spec = FactorSpec::default();
    let data = synth_generate(&spec, n, seed)?;
    println!("{n} images of {}x{}x{}", spec.height, spec.width, FactorSpec::CHANNELS);

    for a in 0..FACTOR_NAMES.len() {
        for b in a + 1..FACTOR_NAMES.len() {
            let test = chi_square_independence(&data.channel_labels(a), &data.channel_labels(b))?;
            println!(
                "{:>10} x {:<10} chi2 {:7.2} on {} dof, p = {:.3}",
                FACTOR_NAMES[a], FACTOR_NAMES[b], test.statistic, test.dof, test.p_value
            );
        }
    }

    save_raw(&out, &data)?;
    let back = load_raw(&out)?;
    assert_eq!(back.pixels(), data.pixels());

    let tiles: Vec<Vec<f64>> = (0..64.min(n))
        .map(|i| data.image(i).iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    let rows = tiles.len().div_ceil(8);
    let mut refs: Vec<&[f64]> = tiles.iter().map(Vec::as_slice).collect();
    let blank = vec![0.0; spec.x_dim()];
    refs.resize(rows * 8, &blank);
    let sheet = tile_sheet(&refs, rows, 8, spec.height, spec.width, FactorSpec::CHANNELS)?;
    let preview = out.join("preview.ppm");
    sheet.save(&preview)?;
    println!("dataset and preview written to {}", out.display());
    Ok(())
}
