//! Skeleton to graph conversion and per-edge geometry.
//!
//! Nodes are endpoints (one skeleton neighbor), bifurcations (three or more
//! neighbors, adjacent junction pixels merged into one node), isolated
//! pixels, and anchors for pure cycles. Edges are ordered pixel chains whose
//! first and last pixels are node pixels.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{Skeleton, NEIGHBORS_8};

/// Pixel coordinate `(x, y)`.
pub type Pixel = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Endpoint,
    Bifurcation,
    /// A skeleton pixel without neighbors.
    Isolated,
    /// Anchor of a cycle that contains no endpoint or bifurcation.
    Loop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub position: Pixel,
    pub kind: NodeKind,
    /// Every skeleton pixel owned by the node, row-major.
    pub pixels: Vec<Pixel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VesselEdge {
    /// Ordered chain; consecutive pixels are 8-neighbors and none repeats.
    pub pixels: Vec<Pixel>,
    pub start: usize,
    pub end: usize,
    /// The chain returns to its first pixel after the last one.
    pub closed: bool,
}

impl VesselEdge {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Pixels that are not node pixels.
    pub fn interior(&self) -> &[Pixel] {
        match (self.closed, self.pixels.len()) {
            (true, _) => &self.pixels[1..],
            (false, n) if n >= 2 => &self.pixels[1..n - 1],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VesselGraph {
    pub width: usize,
    pub height: usize,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<VesselEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Background,
    Node(usize),
    Chain,
}

/// Builds the vessel graph of a skeleton. Traversal is deterministic:
/// nodes are discovered in row-major order and neighbors are visited
/// clockwise from east.
pub fn extract_graph(skeleton: &Skeleton) -> VesselGraph {
    let mask = skeleton.mask();
    let (w, h) = mask.dims();
    let idx = |(x, y): Pixel| y * w + x;
    let neighbors = |(x, y): Pixel| {
        NEIGHBORS_8.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            mask.get_signed(nx, ny).then_some((nx as usize, ny as usize))
        })
    };

    let degree: Vec<u8> = (0..w * h)
        .map(|i| {
            if mask.data()[i] {
                neighbors((i % w, i / w)).count() as u8
            } else {
                0
            }
        })
        .collect();

    let mut role = vec![Role::Background; w * h];
    let mut nodes: Vec<GraphNode> = Vec::new();
    for (x, y) in mask.foreground() {
        let i = idx((x, y));
        if role[i] != Role::Background {
            continue;
        }
        match degree[i] {
            2 => role[i] = Role::Chain,
            0 | 1 => {
                role[i] = Role::Node(nodes.len());
                nodes.push(GraphNode {
                    position: (x, y),
                    kind: if degree[i] == 0 { NodeKind::Isolated } else { NodeKind::Endpoint },
                    pixels: vec![(x, y)],
                });
            }
            _ => {
                // flood the junction cluster
                let id = nodes.len();
                let mut cluster = vec![(x, y)];
                role[i] = Role::Node(id);
                let mut k = 0;
                while k < cluster.len() {
                    let p = cluster[k];
                    k += 1;
                    for q in neighbors(p) {
                        let j = idx(q);
                        if degree[j] >= 3 && role[j] == Role::Background {
                            role[j] = Role::Node(id);
                            cluster.push(q);
                        }
                    }
                }
                cluster.sort_by_key(|&(x, y)| (y, x));
                let n = cluster.len() as f64;
                let cx = cluster.iter().map(|p| p.0 as f64).sum::<f64>() / n;
                let cy = cluster.iter().map(|p| p.1 as f64).sum::<f64>() / n;
                let position = cluster
                    .iter()
                    .copied()
                    .min_by(|a, b| {
                        let da = (a.0 as f64 - cx).powi(2) + (a.1 as f64 - cy).powi(2);
                        let db = (b.0 as f64 - cx).powi(2) + (b.1 as f64 - cy).powi(2);
                        da.total_cmp(&db)
                    })
                    .expect("cluster is nonempty");
                nodes.push(GraphNode {
                    position,
                    kind: NodeKind::Bifurcation,
                    pixels: cluster,
                });
            }
        }
    }

    let mut visited = vec![false; w * h];
    let mut direct_links: HashSet<(Pixel, Pixel)> = HashSet::new();
    let mut edges = Vec::new();

    for node_id in 0..nodes.len() {
        for pi in 0..nodes[node_id].pixels.len() {
            let p = nodes[node_id].pixels[pi];
            for q in neighbors(p) {
                let j = idx(q);
                match role[j] {
                    Role::Node(other) if other != node_id => {
                        let key = if (p.1, p.0) < (q.1, q.0) { (p, q) } else { (q, p) };
                        if direct_links.insert(key) {
                            edges.push(open_edge(vec![p, q], node_id, other));
                        }
                    }
                    Role::Chain if !visited[j] => {
                        visited[j] = true;
                        let mut path = vec![p, q];
                        let (mut prev, mut cur) = (p, q);
                        let end = loop {
                            let Some(next) = neighbors(cur).find(|&n| n != prev) else {
                                break None;
                            };
                            let k = idx(next);
                            match role[k] {
                                Role::Node(id) => {
                                    path.push(next);
                                    break Some(id);
                                }
                                Role::Chain if !visited[k] => {
                                    visited[k] = true;
                                    path.push(next);
                                    prev = cur;
                                    cur = next;
                                }
                                _ => break None,
                            }
                        };
                        match end {
                            Some(_) if path.last() == Some(&p) => {
                                path.pop();
                                edges.push(VesselEdge {
                                    pixels: path,
                                    start: node_id,
                                    end: node_id,
                                    closed: true,
                                });
                            }
                            Some(id) => edges.push(open_edge(path, node_id, id)),
                            // chain ran into itself; keep the pixels as an open edge
                            None => edges.push(open_edge(path, node_id, node_id)),
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    // cycles without any node pixel
    for (x, y) in mask.foreground() {
        let i = idx((x, y));
        if role[i] != Role::Chain || visited[i] {
            continue;
        }
        let id = nodes.len();
        role[i] = Role::Node(id);
        visited[i] = true;
        nodes.push(GraphNode {
            position: (x, y),
            kind: NodeKind::Loop,
            pixels: vec![(x, y)],
        });
        let mut path = vec![(x, y)];
        let (mut prev, mut cur) = ((x, y), (x, y));
        while let Some(next) = neighbors(cur).find(|&n| n != prev && !visited[idx(n)]) {
            visited[idx(next)] = true;
            path.push(next);
            prev = cur;
            cur = next;
        }
        edges.push(VesselEdge {
            pixels: path,
            start: id,
            end: id,
            closed: true,
        });
    }

    VesselGraph {
        width: w,
        height: h,
        nodes,
        edges,
    }
}

/// Orients an open chain to start at the lexicographically smaller `(x, y)`.
fn open_edge(mut pixels: Vec<Pixel>, a: usize, b: usize) -> VesselEdge {
    let (mut start, mut end) = (a, b);
    if pixels.last() < pixels.first() {
        pixels.reverse();
        std::mem::swap(&mut start, &mut end);
    }
    VesselEdge {
        pixels,
        start,
        end,
        closed: false,
    }
}

fn dist(a: Pixel, b: Pixel) -> f64 {
    let dx = a.0 as f64 - b.0 as f64;
    let dy = a.1 as f64 - b.1 as f64;
    (dx * dx + dy * dy).sqrt()
}

/// Sum of Euclidean steps along the chain (each step is 1 or sqrt 2).
/// Closed chains include the step back to the first pixel.
pub fn curve_length(edge: &VesselEdge) -> Result<f64> {
    let n = edge.pixels.len();
    if n < 2 {
        return Err(Error::EdgeTooShort(n));
    }
    let open: f64 = edge.pixels.windows(2).map(|s| dist(s[0], s[1])).sum();
    Ok(if edge.closed {
        open + dist(edge.pixels[n - 1], edge.pixels[0])
    } else {
        open
    })
}

/// Straight-line distance between the first and last pixel; zero for
/// closed chains.
pub fn chord_length(edge: &VesselEdge) -> f64 {
    match (edge.closed, edge.pixels.first(), edge.pixels.last()) {
        (false, Some(&a), Some(&b)) => dist(a, b),
        _ => 0.0,
    }
}

/// Excess tortuosity: arc-chord ratio above its straight-line floor of 1.
pub fn excess_tortuosity(tortuosity: f64) -> f64 {
    tortuosity - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tortuosity {
    pub ratio: f64,
    pub excess: f64,
}

/// Arc-chord ratio of an edge, `None` when the chord is zero.
pub fn tortuosity(edge: &VesselEdge) -> Result<Option<Tortuosity>> {
    let length = curve_length(edge)?;
    let chord = chord_length(edge);
    if chord <= 0.0 {
        return Ok(None);
    }
    let ratio = length / chord;
    Ok(Some(Tortuosity {
        ratio,
        excess: excess_tortuosity(ratio),
    }))
}

/// Per-edge measurements. `tortuosity`/`excess` are `None` for degenerate
/// (zero-chord or single-pixel) edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub pixel_count: usize,
    pub curve_length: f64,
    pub chord_length: f64,
    pub tortuosity: Option<f64>,
    pub excess: Option<f64>,
    pub weight: f64,
    pub degenerate: bool,
    /// Long enough to enter the tortuosity distribution.
    pub eligible: bool,
    pub selected: bool,
}

/// Shortest edge, in pixels, that enters the tortuosity distribution.
pub const DEFAULT_MIN_EDGE_PIXELS: usize = 3;

/// Measures one edge. Edges shorter than `min_pixels` are kept but marked
/// ineligible for the tortuosity distribution.
pub fn measure_edge(edge: &VesselEdge, min_pixels: usize) -> SegmentStats {
    let curve = curve_length(edge).unwrap_or(0.0);
    let chord = chord_length(edge);
    let t = tortuosity(edge).ok().flatten();
    let degenerate = t.is_none();
    SegmentStats {
        pixel_count: edge.pixels.len(),
        curve_length: curve,
        chord_length: chord,
        tortuosity: t.map(|t| t.ratio),
        excess: t.map(|t| t.excess),
        weight: 0.0,
        degenerate,
        eligible: !degenerate && edge.pixels.len() >= min_pixels,
        selected: false,
    }
}

pub fn measure_graph(graph: &VesselGraph, min_pixels: usize) -> Vec<SegmentStats> {
    graph.edges.iter().map(|e| measure_edge(e, min_pixels)).collect()
}

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct NodeDump {
    x: usize,
    y: usize,
    kind: NodeKind,
}

#[derive(Debug, Serialize)]
struct StatsDump {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "L")]
    l: f64,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "T")]
    t: Option<f64>,
    #[serde(rename = "T_excess")]
    t_excess: Option<f64>,
    w: f64,
}

#[derive(Debug, Serialize)]
struct EdgeDump {
    pixels: Vec<[usize; 2]>,
    stats: StatsDump,
}

#[derive(Debug, Serialize)]
struct GraphDump {
    schema_version: u32,
    nodes: Vec<NodeDump>,
    edges: Vec<EdgeDump>,
}

/// JSON dump of a graph with its per-edge statistics.
pub fn graph_json(graph: &VesselGraph, stats: &[SegmentStats]) -> serde_json::Value {
    let dump = GraphDump {
        schema_version: GRAPH_SCHEMA_VERSION,
        nodes: graph
            .nodes
            .iter()
            .map(|n| NodeDump {
                x: n.position.0,
                y: n.position.1,
                kind: n.kind,
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .zip(stats)
            .map(|(e, s)| EdgeDump {
                pixels: e.pixels.iter().map(|&(x, y)| [x, y]).collect(),
                stats: StatsDump {
                    n: s.pixel_count,
                    l: s.curve_length,
                    c: s.chord_length,
                    t: s.tortuosity,
                    t_excess: s.excess,
                    w: s.weight,
                },
            })
            .collect(),
    };
    serde_json::to_value(dump).expect("graph dump is plain data")
}
