//! Score a clustering against ground truth under both assignment modes, and
//! confirm the Hungarian answer against exhaustive search.
//!
//! ```text
//! cargo run --release --example cluster_accuracy
//! ```

use vlac::evaluation::{brute_force_accuracy, cluster_accuracy, AssignmentMode, LabelPair};

fn main() -> vlac::Result<()> {
    // Six clusters over four classes: two clusters split class 0, one is mixed.
    let predictions = vec![0, 0, 0, 1, 1, 2, 2, 2, 3, 3, 4, 4, 5, 5, 5, 5];
    let truths = vec![0, 0, 1, 0, 0, 1, 1, 1, 2, 2, 3, 3, 3, 2, 3, 0];
    let pairs = LabelPair::new(predictions, truths, 6, 4)?;

    for mode in [AssignmentMode::ManyToOne, AssignmentMode::Injective] {
        let fast = cluster_accuracy(&pairs, mode);
        let exact = brute_force_accuracy(&pairs, mode)?;
        println!(
            "{:<12} accuracy {:.3} ({}/{})  exhaustive {:.3}  mapping {:?}",
            mode.name(),
            fast.accuracy,
            fast.matched,
            fast.total,
            exact.accuracy,
            fast.mapping
        );
    }
    Ok(())
}
