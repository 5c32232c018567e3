//! JSON form of a space:
//! `{"n", "metric": {"type": "explicit", "matrix"} | {"type": "graph", "edges": [[u, v, len]]},
//!   "measure", "coords"?, "conductances"?, "boundary"?, "generator"?}`.
//!
//! When a generator recipe is present the space is rebuilt from it, which
//! keeps lattice and product structure available after a round trip.

use serde::{Deserialize, Serialize};

use super::{
    binary_tree, connected_sum, grid, product_space, Edge, Generator, Metric, MetricMeasureSpace, Sigma2,
};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetricFile {
    Explicit { matrix: Vec<Vec<f64>> },
    Graph { edges: Vec<(usize, usize, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceFile {
    pub n: usize,
    pub metric: MetricFile,
    pub measure: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conductances: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
}

fn build_generator(g: &Generator) -> Result<MetricMeasureSpace> {
    match g {
        Generator::Grid { dim, side, h, sigma2 } => grid(*dim, *side, *h, Sigma2::Constant(*sigma2)),
        Generator::BinaryTree { depth } => binary_tree(*depth),
        Generator::ConnectedSum { copies, neck } => connected_sum(copies, *neck),
        Generator::Product { base, n_line, h } => product_space(&build_generator(base)?, *n_line, *h),
    }
}

impl SpaceFile {
    pub fn from_space(space: &MetricMeasureSpace) -> SpaceFile {
        let metric = match space.metric() {
            Metric::Graph { adj, .. } => MetricFile::Graph {
                edges: adj
                    .iter()
                    .enumerate()
                    .flat_map(|(u, nb)| nb.iter().filter(move |&&(v, _)| u < v).map(move |&(v, l)| (u, v, l)))
                    .collect(),
            },
            Metric::Lattice { h, .. } => MetricFile::Graph {
                edges: space.edges().iter().map(|e| (e.u, e.v, *h)).collect(),
            },
            Metric::BinaryTree => MetricFile::Graph {
                edges: space.edges().iter().map(|e| (e.u, e.v, 1.0)).collect(),
            },
            _ => MetricFile::Explicit {
                matrix: (0..space.len()).map(|x| space.distances_from(x)).collect(),
            },
        };
        let boundary: Vec<usize> = (0..space.len()).filter(|&i| space.boundary()[i]).collect();
        SpaceFile {
            n: space.len(),
            metric,
            measure: space.measure().to_vec(),
            coords: space.coords().map(|c| c.to_vec()),
            conductances: (!space.edges().is_empty())
                .then(|| space.edges().iter().map(|e| (e.u, e.v, e.w)).collect()),
            boundary: (!boundary.is_empty()).then_some(boundary),
            generator: space.generator().cloned(),
        }
    }

    pub fn into_space(self) -> Result<MetricMeasureSpace> {
        if self.measure.len() != self.n {
            return invalid(format!("measure has {} entries, n = {}", self.measure.len(), self.n));
        }
        if let Some(g) = &self.generator {
            let space = build_generator(g)?;
            if space.len() != self.n || space.measure() != self.measure.as_slice() {
                return invalid("generator recipe does not reproduce the stored space");
            }
            return Ok(space);
        }
        let mut space = match self.metric {
            MetricFile::Explicit { matrix } => {
                if matrix.len() != self.n {
                    return invalid("distance matrix size does not match n");
                }
                super::explicit(matrix, self.measure)?
            }
            MetricFile::Graph { edges } => super::graph(self.n, &edges, self.measure)?,
        };
        if let Some(c) = self.conductances {
            space.edges = c.into_iter().map(|(u, v, w)| Edge { u: u.min(v), v: u.max(v), w }).collect();
        }
        if let Some(b) = self.boundary {
            let mut flags = vec![false; space.n];
            for i in b {
                space.check_point(i)?;
                flags[i] = true;
            }
            space.boundary = flags;
        }
        if let Some(c) = self.coords {
            if c.len() != space.n {
                return invalid("coords length does not match n");
            }
            space.coords = Some(c);
        }
        let checked = MetricMeasureSpace::assemble(
            space.metric.clone(),
            space.measure.clone(),
            space.coords.clone(),
            space.edges.clone(),
            space.boundary.clone(),
        )?;
        Ok(checked)
    }
}

impl MetricMeasureSpace {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&SpaceFile::from_space(self)).expect("space serializes")
    }

    pub fn from_json(text: &str) -> Result<MetricMeasureSpace> {
        let file: SpaceFile = serde_json::from_str(text)?;
        file.into_space()
    }
}
