//! Structured quadrilateral discretization of the fixed design domain.
//!
//! Nodes are numbered row-major from the bottom-left corner (x fastest),
//! elements likewise. Element connectivity is counter-clockwise starting at
//! the bottom-left node. Layers are horizontal bands of element rows; layer 1
//! touches the bottom edge.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("domain extents must be positive (width = {width}, height = {height})")]
    NonPositiveExtent { width: f64, height: f64 },
    #[error("element counts must be at least one (nx = {nx}, ny = {ny})")]
    NoElements { nx: usize, ny: usize },
    #[error("layer count must be at least one")]
    NoLayers,
    #[error("ny = {ny} is not divisible by the layer count m = {layers}")]
    LayersDoNotDivide { ny: usize, layers: usize },
    #[error("layer index {index} outside 1..={layers}")]
    LayerOutOfRange { index: usize, layers: usize },
    #[error("boundary selector {0:?} lies outside the domain")]
    SelectorOutOfDomain(BoundarySelector),
    #[error("boundary selector {0:?} selects no nodes")]
    EmptySelection(BoundarySelector),
    #[error("boundary set `{name}` shares an edge with existing set `{other}`")]
    OverlappingBoundarySets { name: String, other: String },
}

/// One side of the rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

/// Describes a set of boundary nodes.
///
/// `PointLoadSpan` selects the nodes on `edge` whose coordinate along that
/// edge lies within `center ± half_width` (x for bottom/top, y for left/right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySelector {
    LeftEdge,
    RightEdge,
    BottomEdge,
    BottomSpan { x0: f64, x1: f64 },
    PointLoadSpan { edge: Edge, center: f64, half_width: f64 },
}

/// Element masks for the step-`i` subdomains of the building process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMask {
    /// Elements of layer `i` (where the inherent strain is applied).
    pub inherent: Vec<bool>,
    /// Elements of layers `1..=i`.
    pub active: Vec<bool>,
}

impl LayerMask {
    /// Complement of the active mask.
    pub fn inactive(&self) -> Vec<bool> {
        self.active.iter().map(|a| !a).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
    layers: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 4]>,
    layer_of: Vec<usize>,
    boundary_sets: BTreeMap<String, Vec<usize>>,
}

impl Mesh2D {
    /// Builds an `nx × ny` grid over `[0, width] × [0, height]` split into
    /// `layers` bands of `ny / layers` element rows.
    pub fn structured(
        width: f64,
        height: f64,
        nx: usize,
        ny: usize,
        layers: usize,
    ) -> Result<Self, MeshError> {
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(MeshError::NonPositiveExtent { width, height });
        }
        if nx == 0 || ny == 0 {
            return Err(MeshError::NoElements { nx, ny });
        }
        if layers == 0 {
            return Err(MeshError::NoLayers);
        }
        if ny % layers != 0 {
            return Err(MeshError::LayersDoNotDivide { ny, layers });
        }

        let hx = width / nx as f64;
        let hy = height / ny as f64;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // Pin the far edges to the exact extents.
                let x = if i == nx { width } else { i as f64 * hx };
                let y = if j == ny { height } else { j as f64 * hy };
                nodes.push([x, y]);
            }
        }

        let rows_per_layer = ny / layers;
        let mut elements = Vec::with_capacity(nx * ny);
        let mut layer_of = Vec::with_capacity(nx * ny);
        for r in 0..ny {
            for c in 0..nx {
                let n0 = r * (nx + 1) + c;
                elements.push([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1]);
                layer_of.push(r / rows_per_layer + 1);
            }
        }

        Ok(Self {
            width,
            height,
            nx,
            ny,
            layers,
            nodes,
            elements,
            layer_of,
            boundary_sets: BTreeMap::new(),
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of AM layers `m`.
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    /// Element edge lengths `(hx, hy)`.
    pub fn element_size(&self) -> (f64, f64) {
        (self.width / self.nx as f64, self.height / self.ny as f64)
    }

    pub fn element_area(&self) -> f64 {
        let (hx, hy) = self.element_size();
        hx * hy
    }

    pub fn domain_area(&self) -> f64 {
        self.width * self.height
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        j * (self.nx + 1) + i
    }

    /// Element at column `c`, row `r` (both zero-based from the bottom-left).
    pub fn element_index(&self, c: usize, r: usize) -> usize {
        debug_assert!(c < self.nx && r < self.ny);
        r * self.nx + c
    }

    /// Zero-based `(column, row)` of an element.
    pub fn element_position(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// One-based layer index of element `e`.
    pub fn layer_of(&self, e: usize) -> usize {
        self.layer_of[e]
    }

    pub fn layer_tags(&self) -> &[usize] {
        &self.layer_of
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        let (c, r) = self.element_position(e);
        let (hx, hy) = self.element_size();
        [(c as f64 + 0.5) * hx, (r as f64 + 0.5) * hy]
    }

    /// Masks for `Ω_inh = Ω_i` and `Ω_A = Ω_1 ∪ … ∪ Ω_i`.
    pub fn layer_mask(&self, i: usize) -> Result<LayerMask, MeshError> {
        if i == 0 || i > self.layers {
            return Err(MeshError::LayerOutOfRange {
                index: i,
                layers: self.layers,
            });
        }
        Ok(LayerMask {
            inherent: self.layer_of.iter().map(|&l| l == i).collect(),
            active: self.layer_of.iter().map(|&l| l <= i).collect(),
        })
    }

    /// Nodes along the bottom edge, ordered by x.
    pub fn bottom_nodes(&self) -> Vec<usize> {
        (0..=self.nx).map(|i| self.node_index(i, 0)).collect()
    }

    /// Nodes along the top edge, ordered by x.
    pub fn top_nodes(&self) -> Vec<usize> {
        (0..=self.nx).map(|i| self.node_index(i, self.ny)).collect()
    }

    fn edge_nodes(&self, edge: Edge) -> Vec<usize> {
        match edge {
            Edge::Bottom => self.bottom_nodes(),
            Edge::Top => self.top_nodes(),
            Edge::Left => (0..=self.ny).map(|j| self.node_index(0, j)).collect(),
            Edge::Right => (0..=self.ny).map(|j| self.node_index(self.nx, j)).collect(),
        }
    }

    /// Nodes matched by `selector`, ordered along the edge.
    pub fn select_boundary(&self, selector: &BoundarySelector) -> Result<Vec<usize>, MeshError> {
        let tol = 1e-9 * self.width.max(self.height);
        let (edge, lo, hi) = match *selector {
            BoundarySelector::LeftEdge => (Edge::Left, 0.0, self.height),
            BoundarySelector::RightEdge => (Edge::Right, 0.0, self.height),
            BoundarySelector::BottomEdge => (Edge::Bottom, 0.0, self.width),
            BoundarySelector::BottomSpan { x0, x1 } => {
                if !(x0 <= x1) || x0 < -tol || x1 > self.width + tol {
                    return Err(MeshError::SelectorOutOfDomain(*selector));
                }
                (Edge::Bottom, x0, x1)
            }
            BoundarySelector::PointLoadSpan {
                edge,
                center,
                half_width,
            } => {
                let extent = match edge {
                    Edge::Bottom | Edge::Top => self.width,
                    Edge::Left | Edge::Right => self.height,
                };
                if !(half_width >= 0.0)
                    || center - half_width < -tol
                    || center + half_width > extent + tol
                {
                    return Err(MeshError::SelectorOutOfDomain(*selector));
                }
                (edge, center - half_width, center + half_width)
            }
        };
        let axis = match edge {
            Edge::Bottom | Edge::Top => 0,
            Edge::Left | Edge::Right => 1,
        };
        let picked: Vec<usize> = self
            .edge_nodes(edge)
            .into_iter()
            .filter(|&n| {
                let s = self.nodes[n][axis];
                s >= lo - tol && s <= hi + tol
            })
            .collect();
        if picked.is_empty() {
            return Err(MeshError::EmptySelection(*selector));
        }
        Ok(picked)
    }

    /// Consecutive node pairs of `nodes` that form boundary edges.
    pub fn boundary_edges(&self, nodes: &[usize]) -> Vec<[usize; 2]> {
        let (hx, hy) = self.element_size();
        let tol = 1e-9 * hx.min(hy);
        nodes
            .windows(2)
            .filter_map(|w| {
                let [a, b] = [w[0], w[1]];
                let pa = self.nodes[a];
                let pb = self.nodes[b];
                let on_same_side = (pa[0].abs() < tol && pb[0].abs() < tol)
                    || ((pa[0] - self.width).abs() < tol && (pb[0] - self.width).abs() < tol)
                    || (pa[1].abs() < tol && pb[1].abs() < tol)
                    || ((pa[1] - self.height).abs() < tol && (pb[1] - self.height).abs() < tol);
                let len = (pa[0] - pb[0]) * (pa[0] - pb[0]) + (pa[1] - pb[1]) * (pa[1] - pb[1]);
                let len = crate::math::sqrt(len);
                let adjacent = (len - hx).abs() < tol || (len - hy).abs() < tol;
                (on_same_side && adjacent).then_some([a, b])
            })
            .collect()
    }

    /// Registers a named boundary set. Two named sets may share corner nodes
    /// but never a boundary edge.
    pub fn tag_boundary(
        &mut self,
        name: &str,
        selector: &BoundarySelector,
    ) -> Result<&[usize], MeshError> {
        let nodes = self.select_boundary(selector)?;
        let new_edges = self.boundary_edges(&nodes);
        for (other, existing) in &self.boundary_sets {
            let old_edges = self.boundary_edges(existing);
            let clash = new_edges.iter().any(|e| {
                old_edges
                    .iter()
                    .any(|o| (o[0] == e[0] && o[1] == e[1]) || (o[0] == e[1] && o[1] == e[0]))
            });
            if clash && other != name {
                return Err(MeshError::OverlappingBoundarySets {
                    name: name.into(),
                    other: other.clone(),
                });
            }
        }
        self.boundary_sets.insert(name.into(), nodes);
        Ok(&self.boundary_sets[name])
    }

    pub fn boundary_set(&self, name: &str) -> Option<&[usize]> {
        self.boundary_sets.get(name).map(Vec::as_slice)
    }

    pub fn boundary_sets(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.boundary_sets
    }

    /// Node reflected about the vertical centerline `x = width / 2`.
    pub fn mirror_node(&self, k: usize) -> usize {
        let i = k % (self.nx + 1);
        let j = k / (self.nx + 1);
        self.node_index(self.nx - i, j)
    }

    /// Element reflected about the vertical centerline.
    pub fn mirror_element(&self, e: usize) -> usize {
        let (c, r) = self.element_position(e);
        self.element_index(self.nx - 1 - c, r)
    }

    /// Mean of a nodal scalar field over each element's four nodes.
    pub fn element_means(&self, nodal: &[f64]) -> Vec<f64> {
        debug_assert_eq!(nodal.len(), self.num_nodes());
        self.elements
            .iter()
            .map(|conn| 0.25 * conn.iter().map(|&n| nodal[n]).sum::<f64>())
            .collect()
    }

    /// Area associated with each node by lumping element areas equally to
    /// their four corners. Sums to the domain area.
    pub fn nodal_areas(&self) -> Vec<f64> {
        let quarter = 0.25 * self.element_area();
        let mut areas = alloc::vec![0.0; self.num_nodes()];
        for conn in &self.elements {
            for &n in conn {
                areas[n] += quarter;
            }
        }
        areas
    }
}
