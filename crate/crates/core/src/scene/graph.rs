//! Lattice + entity graph construction and its JSON form.

use serde::{Deserialize, Serialize};

use super::{
    EntityClass, GraphVariant, SceneEntity, TimeEncoding, BBOX_SLOTS, CLASS_SLOTS, TIME_SLOTS,
};
use crate::error::{ensure_domain, Error, Result};

/// Grid resolution and the entity-to-grid connection radius (in grid spacings).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "radius")]
    pub connect_radius_hops: usize,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 20,
            connect_radius_hops: 1,
        }
    }
}

impl LatticeSpec {
    pub fn new(rows: usize, cols: usize, connect_radius_hops: usize) -> Result<Self> {
        let spec = Self {
            rows,
            cols,
            connect_radius_hops,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_domain!(
            self.rows >= 2 && self.cols >= 2,
            "lattice must be at least 2x2, got {}x{}",
            self.rows,
            self.cols
        );
        ensure_domain!(self.connect_radius_hops >= 1, "connect radius must be >= 1");
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Horizontal and vertical distance between neighboring grid nodes.
    pub fn spacing(&self) -> (f64, f64) {
        (
            1.0 / (self.cols - 1) as f64,
            1.0 / (self.rows - 1) as f64,
        )
    }

    /// Euclidean connection radius in normalized coordinates.
    pub fn radius(&self) -> f64 {
        let (sx, sy) = self.spacing();
        self.connect_radius_hops as f64 * sx.max(sy)
    }

    pub fn grid_position(&self, row: usize, col: usize) -> [f64; 2] {
        [
            col as f64 / (self.cols - 1) as f64,
            row as f64 / (self.rows - 1) as f64,
        ]
    }
}

/// Scene graph: lattice nodes followed by entity nodes, with directed edges.
///
/// Undirected links are stored as two directed pairs. `lattice_index[row * cols + col]`
/// is the node index of grid cell `(row, col)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    variant: GraphVariant,
    lattice: LatticeSpec,
    features: Vec<f64>,
    kinds: Vec<EntityClass>,
    positions: Vec<[f64; 2]>,
    edges: Vec<(usize, usize)>,
    lattice_index: Vec<usize>,
}

impl SceneGraph {
    pub fn variant(&self) -> GraphVariant {
        self.variant
    }

    pub fn lattice(&self) -> LatticeSpec {
        self.lattice
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn feature_width(&self) -> usize {
        self.variant.feature_width()
    }

    /// Row-major `node_count × feature_width` feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn node_features(&self, node: usize) -> &[f64] {
        let f = self.feature_width();
        &self.features[node * f..(node + 1) * f]
    }

    pub fn kinds(&self) -> &[EntityClass] {
        &self.kinds
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn lattice_index(&self) -> &[usize] {
        &self.lattice_index
    }

    pub fn entity_count(&self) -> usize {
        self.kinds.iter().filter(|k| **k != EntityClass::Grid).count()
    }

    /// Targets of edges leaving `node`, sorted.
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter(|(s, _)| *s == node)
            .map(|(_, t)| *t)
            .collect();
        out.sort_unstable();
        out
    }

    /// Overwrites the time slots of every node.
    pub fn stamp_time(&mut self, time: TimeEncoding) {
        let f = self.feature_width();
        for row in self.features.chunks_mut(f) {
            row[TIME_SLOTS].copy_from_slice(&time.as_array());
        }
    }

    fn push_node(&mut self, kind: EntityClass, position: [f64; 2], features: Vec<f64>) -> usize {
        debug_assert_eq!(features.len(), self.feature_width());
        self.kinds.push(kind);
        self.positions.push(position);
        self.features.extend(features);
        self.kinds.len() - 1
    }

    fn link(&mut self, a: usize, b: usize) {
        self.edges.push((a, b));
        self.edges.push((b, a));
    }
}

/// Grid-only graph: `rows × cols` nodes in row-major order, linked to their 4-neighbors.
///
/// Grid features hold the node position, one cell's extent as the box size and the
/// grid one-hot; time and color slots are zero.
pub fn build_lattice(spec: LatticeSpec, variant: GraphVariant) -> Result<SceneGraph> {
    spec.validate()?;
    let width = variant.feature_width();
    let (sx, sy) = spec.spacing();
    let mut graph = SceneGraph {
        variant,
        lattice: spec,
        features: Vec::with_capacity(spec.node_count() * width),
        kinds: Vec::with_capacity(spec.node_count()),
        positions: Vec::with_capacity(spec.node_count()),
        edges: Vec::new(),
        lattice_index: (0..spec.node_count()).collect(),
    };
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let pos = spec.grid_position(row, col);
            let mut f = vec![0.0; width];
            f[BBOX_SLOTS].copy_from_slice(&[pos[0], pos[1], sx, sy]);
            f[CLASS_SLOTS].copy_from_slice(&EntityClass::Grid.one_hot());
            graph.push_node(EntityClass::Grid, pos, f);
        }
    }
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let here = row * spec.cols + col;
            if col + 1 < spec.cols {
                graph.link(here, here + 1);
            }
            if row + 1 < spec.rows {
                graph.link(here, here + spec.cols);
            }
        }
    }
    Ok(graph)
}

/// Lattice plus one node per entity, each linked both ways to every grid node within
/// the connection radius of its box center. All nodes carry `time`.
pub fn build_scene_graph(
    entities: &[SceneEntity],
    time: TimeEncoding,
    spec: LatticeSpec,
    variant: GraphVariant,
) -> Result<SceneGraph> {
    for (i, e) in entities.iter().enumerate() {
        ensure_domain!(
            e.color.variant() == variant,
            "entity {i} has a {} color feature but the graph variant is {variant}",
            e.color.variant()
        );
        ensure_domain!(e.entity_class != EntityClass::Grid, "entity {i} has class grid");
    }
    let mut graph = build_lattice(spec, variant)?;
    graph.stamp_time(time);

    let (sx, sy) = spec.spacing();
    let radius = spec.radius();
    let hops = spec.connect_radius_hops as isize;
    for entity in entities {
        let mut f = Vec::with_capacity(variant.feature_width());
        f.extend(entity.bbox.as_array());
        f.extend(entity.entity_class.one_hot());
        f.extend(time.as_array());
        f.extend(entity.color.to_features());
        let [x, y] = entity.bbox.center();
        let node = graph.push_node(entity.entity_class, [x, y], f);

        // Candidate window around the nearest cell, then the exact distance test.
        let reach_c = (radius / sx).ceil() as isize + hops;
        let reach_r = (radius / sy).ceil() as isize + hops;
        let c0 = (x / sx).round() as isize;
        let r0 = (y / sy).round() as isize;
        for row in (r0 - reach_r).max(0)..=(r0 + reach_r).min(spec.rows as isize - 1) {
            for col in (c0 - reach_c).max(0)..=(c0 + reach_c).min(spec.cols as isize - 1) {
                let (row, col) = (row as usize, col as usize);
                let [gx, gy] = spec.grid_position(row, col);
                let d = ((gx - x).powi(2) + (gy - y).powi(2)).sqrt();
                if d <= radius {
                    graph.link(node, row * spec.cols + col);
                }
            }
        }
    }
    Ok(graph)
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    kind: EntityClass,
    position: [f64; 2],
    features: Vec<f64>,
}

/// On-disk graph format.
#[derive(Serialize, Deserialize)]
struct SceneGraphFile {
    variant: GraphVariant,
    lattice: LatticeSpec,
    nodes: Vec<NodeRecord>,
    edges: Vec<[usize; 2]>,
}

impl Serialize for SceneGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let nodes = (0..self.node_count())
            .map(|i| NodeRecord {
                kind: self.kinds[i],
                position: self.positions[i],
                features: self.node_features(i).to_vec(),
            })
            .collect();
        SceneGraphFile {
            variant: self.variant,
            lattice: self.lattice,
            nodes,
            edges: self.edges.iter().map(|(a, b)| [*a, *b]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SceneGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = SceneGraphFile::deserialize(deserializer)?;
        SceneGraph::try_from(file).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<SceneGraphFile> for SceneGraph {
    type Error = Error;

    fn try_from(file: SceneGraphFile) -> Result<Self> {
        let spec = file.lattice;
        spec.validate()?;
        let width = file.variant.feature_width();
        let n = file.nodes.len();
        let mut lattice_index = vec![usize::MAX; spec.node_count()];
        let mut graph = SceneGraph {
            variant: file.variant,
            lattice: spec,
            features: Vec::with_capacity(n * width),
            kinds: Vec::with_capacity(n),
            positions: Vec::with_capacity(n),
            edges: Vec::with_capacity(file.edges.len()),
            lattice_index: Vec::new(),
        };
        for (i, node) in file.nodes.into_iter().enumerate() {
            ensure_domain!(
                node.features.len() == width,
                "node {i} has {} features, expected {width}",
                node.features.len()
            );
            ensure_domain!(
                node.features[CLASS_SLOTS] == node.kind.one_hot(),
                "node {i} class one-hot does not match kind {}",
                node.kind
            );
            if node.kind == EntityClass::Grid {
                let col = (node.position[0] * (spec.cols - 1) as f64).round();
                let row = (node.position[1] * (spec.rows - 1) as f64).round();
                ensure_domain!(
                    (0.0..spec.cols as f64).contains(&col) && (0.0..spec.rows as f64).contains(&row),
                    "grid node {i} lies off the lattice"
                );
                let cell = row as usize * spec.cols + col as usize;
                ensure_domain!(
                    lattice_index[cell] == usize::MAX,
                    "grid cell ({row}, {col}) appears twice"
                );
                lattice_index[cell] = i;
            }
            graph.push_node(node.kind, node.position, node.features);
        }
        ensure_domain!(
            lattice_index.iter().all(|i| *i != usize::MAX),
            "graph does not cover every lattice cell"
        );
        for [a, b] in file.edges {
            ensure_domain!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            let (ka, kb) = (graph.kinds[a], graph.kinds[b]);
            ensure_domain!(
                ka == EntityClass::Grid || kb == EntityClass::Grid,
                "edge ({a}, {b}) links two entity nodes"
            );
            graph.edges.push((a, b));
        }
        graph.lattice_index = lattice_index;
        Ok(graph)
    }
}
