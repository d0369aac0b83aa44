use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::assignment::{cluster_accuracy, AssignmentMode, AssignmentResult, LabelPair};
use crate::model::{ParamStore, Vlac};
use crate::real::Real;

/// Rows classified per forward pass.
const CHUNK: usize = 512;

/// Accuracy of one layer's clusters against one truth channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelReport {
    pub name: String,
    pub classes: usize,
    pub injective: AssignmentResult,
    pub many_to_one: AssignmentResult,
    /// `[cluster][class]`
    pub contingency: Vec<Vec<usize>>,
}

impl ChannelReport {
    pub fn accuracy(&self, mode: AssignmentMode) -> f64 {
        match mode {
            AssignmentMode::Injective => self.injective.accuracy,
            AssignmentMode::ManyToOne => self.many_to_one.accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    /// 0-based layer index.
    pub layer: usize,
    pub clusters: usize,
    pub datapoints: usize,
    /// Datapoints per cluster.
    pub occupancy: Vec<usize>,
    pub channels: Vec<ChannelReport>,
}

impl EvaluationReport {
    pub fn channel(&self, name: &str) -> Option<&ChannelReport> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Tab-separated sections: accuracies, occupancy, then one contingency table
    /// per truth channel.
    pub fn to_delimited(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# layer\t{}\tclusters\t{}\tdatapoints\t{}", self.layer + 1, self.clusters, self.datapoints);
        let _ = writeln!(s, "channel\tclasses\tinjective\tmany-to-one");
        for c in &self.channels {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.6}\t{:.6}",
                c.name, c.classes, c.injective.accuracy, c.many_to_one.accuracy
            );
        }
        let _ = writeln!(s, "\n# occupancy\ncluster\tcount");
        for (k, n) in self.occupancy.iter().enumerate() {
            let _ = writeln!(s, "{k}\t{n}");
        }
        for c in &self.channels {
            let _ = writeln!(s, "\n# contingency\t{}", c.name);
            let header: Vec<String> = (0..c.classes).map(|t| format!("{}={t}", c.name)).collect();
            let _ = writeln!(s, "cluster\t{}", header.join("\t"));
            for (k, row) in c.contingency.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(usize::to_string).collect();
                let _ = writeln!(s, "{k}\t{}", cells.join("\t"));
            }
        }
        s
    }
}

/// Report for precomputed cluster predictions against every label channel.
pub fn evaluate_predictions(dataset: &Dataset, layer: usize, clusters: usize, predictions: &[usize]) -> Result<EvaluationReport> {
    let mut occupancy = vec![0; clusters];
    for &y in predictions {
        occupancy[y] += 1;
    }
    let mut channels = Vec::new();
    for (c, (name, classes)) in dataset.label_channels.iter().enumerate() {
        let pairs = LabelPair::new(predictions.to_vec(), dataset.channel_labels(c), clusters, *classes)?;
        channels.push(ChannelReport {
            name: name.clone(),
            classes: *classes,
            injective: cluster_accuracy(&pairs, AssignmentMode::Injective),
            many_to_one: cluster_accuracy(&pairs, AssignmentMode::ManyToOne),
            contingency: pairs.contingency(),
        });
    }
    Ok(EvaluationReport {
        layer,
        clusters,
        datapoints: predictions.len(),
        occupancy,
        channels,
    })
}

/// Clusters every datapoint by the argmax of `q(y_ℓ | x)` at 0-based `layer` and
/// scores the result against each label channel.
pub fn evaluate_model<S: Real>(model: &Vlac, store: &ParamStore<S>, dataset: &Dataset, layer: usize) -> Result<EvaluationReport> {
    let spec = model
        .config()
        .layers
        .get(layer)
        .ok_or_else(|| Error::invalid(format!("layer {} outside 1..={}", layer + 1, model.num_layers())))?;
    if !spec.is_mixture() {
        return Err(Error::invalid(format!(
            "layer {} has K = 1 and cannot be clustered",
            layer + 1
        )));
    }
    if dataset.x_dim() != model.config().x_dim {
        return Err(Error::invalid(format!(
            "dataset images have {} values, model expects {}",
            dataset.x_dim(),
            model.config().x_dim
        )));
    }
    let probs = model.posterior_probs(store, &dataset.all::<S>(), layer, CHUNK)?;
    evaluate_predictions(dataset, layer, spec.k, &probs.argmax_rows())
}
