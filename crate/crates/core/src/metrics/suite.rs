use crate::snapshot::{filter_coverage, YearSnapshot};

use super::components::{component_size_gini, connected_components, strong_refines_weak, ComponentMode};
use super::degree::degree_vectors;
use super::density;
use super::graph::SnapshotGraph;
use super::mixing::{
    average_local_clustering, degree_assortativity, AssortativityVariant, ClusteringSample, LowDegreePolicy,
};
use super::stats::{distribution_moments, gini};
use super::top::{top_percent_component_membership_with, top_percent_edge_share, RankWeighting};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    pub top_fraction: f64,
    pub rank_weighting: RankWeighting,
    pub clustering_sample: Option<ClusteringSample>,
    pub low_degree: LowDegreePolicy,
    /// Also compute assortativity and clustering on the raw snapshot.
    pub compare_unfiltered: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            top_fraction: 0.01,
            rank_weighting: RankWeighting::Activity,
            clustering_sample: None,
            low_degree: LowDegreePolicy::CountAsZero,
            compare_unfiltered: true,
        }
    }
}

/// One named statistic; `value` is `None` where the statistic is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue {
    pub metric: &'static str,
    pub variant: String,
    pub value: Option<f64>,
}

fn push(out: &mut Vec<MetricValue>, metric: &'static str, variant: impl Into<String>, value: Option<f64>) {
    out.push(MetricValue {
        metric,
        variant: variant.into(),
        value,
    });
}

/// Every per-year graph statistic. `main` is the snapshot analysed in full
/// (normally the dust-filtered one); `raw` supplies growth counts, filter
/// coverage and the unfiltered comparison.
pub fn snapshot_metrics(raw: &YearSnapshot, main: &YearSnapshot, opts: &MetricOptions) -> Vec<MetricValue> {
    let mut out = Vec::new();
    let main_label = if main.filtered { "filtered" } else { "unfiltered" };

    push(&mut out, "nodes", "raw", Some(raw.node_count() as f64));
    push(&mut out, "edges", "raw", Some(raw.edge_count() as f64));
    push(&mut out, "density", "raw", density(raw).ok());
    if main.filtered {
        push(&mut out, "nodes", "filtered", Some(main.node_count() as f64));
        push(&mut out, "edges", "filtered", Some(main.edge_count() as f64));
        push(&mut out, "density", "filtered", density(main).ok());
        let cov = filter_coverage(raw, main).ok();
        push(&mut out, "coverage", "volume", cov.map(|c| c.volume_share));
        push(&mut out, "coverage", "nodes", cov.map(|c| c.node_share));
    }

    let g = SnapshotGraph::new(main);
    let degrees = degree_vectors(&g);
    for dv in degrees.iter() {
        let variant = format!("{}_{}", dv.direction, dv.weighting);
        let moments = distribution_moments(&dv.values).ok();
        push(&mut out, "degree_mean", variant.clone(), moments.map(|m| m.mean));
        push(&mut out, "degree_sd", variant.clone(), moments.map(|m| m.std_dev));
        push(
            &mut out,
            "degree_skewness",
            variant.clone(),
            moments.and_then(|m| m.skewness),
        );
        push(
            &mut out,
            "degree_kurtosis",
            variant.clone(),
            moments.and_then(|m| m.kurtosis),
        );
        push(&mut out, "degree_gini", variant, gini(&dv.values).ok());
    }

    let mixing = |g: &SnapshotGraph| {
        (
            degree_assortativity(g, AssortativityVariant::UndirectedTotal)
                .ok()
                .flatten(),
            average_local_clustering(g, opts.clustering_sample, opts.low_degree)
                .ok()
                .flatten(),
        )
    };
    let (assort, clust) = mixing(&g);
    push(&mut out, "assortativity", main_label, assort);
    push(
        &mut out,
        "assortativity",
        format!("{main_label}_directed"),
        degree_assortativity(&g, AssortativityVariant::DirectedOutIn)
            .ok()
            .flatten(),
    );
    push(&mut out, "clustering", main_label, clust);
    if main.filtered && opts.compare_unfiltered {
        let (assort, clust) = mixing(&SnapshotGraph::new(raw));
        push(&mut out, "assortativity", "unfiltered", assort);
        push(&mut out, "clustering", "unfiltered", clust);
    }

    let weak = connected_components(&g, ComponentMode::Weak);
    let strong = connected_components(&g, ComponentMode::Strong);
    assert!(
        strong_refines_weak(&strong, &weak),
        "strong components must nest inside weak components"
    );
    let n = g.node_count() as f64;
    for (name, p) in [("weak", &weak), ("strong", &strong)] {
        push(&mut out, "component_count", name, Some(p.component_count() as f64));
        push(
            &mut out,
            "largest_component_share",
            name,
            (n > 0.0).then(|| p.largest_size() as f64 / n),
        );
        push(&mut out, "component_size_gini", name, component_size_gini(p).ok());
    }

    let shares = top_percent_edge_share(&g, opts.top_fraction, opts.rank_weighting).ok();
    push(&mut out, "top_edge_share", "in", shares.and_then(|s| s.in_share));
    push(&mut out, "top_edge_share", "out", shares.and_then(|s| s.out_share));
    let member = top_percent_component_membership_with(&g, opts.top_fraction, opts.rank_weighting, &weak, &strong).ok();
    push(&mut out, "top_membership", "in_lscc", member.map(|m| m.in_lscc));
    push(&mut out, "top_membership", "in_lwcc", member.map(|m| m.in_lwcc));
    push(&mut out, "top_membership", "out_lscc", member.map(|m| m.out_lscc));
    push(&mut out, "top_membership", "out_lwcc", member.map(|m| m.out_lwcc));
    out
}
