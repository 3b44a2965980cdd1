use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Node, RoadLink, RoadNetwork};

/// Parameters of the synthetic Manhattan grid generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    /// Junction spacing, meters.
    pub spacing: f64,
    /// m/s.
    pub free_speed: f64,
    /// Probability that a junction approach is signal controlled.
    pub tls_fraction: f64,
    /// Red + yellow seconds on controlled approaches.
    pub tls_ry: f64,
    /// Links per block edge; values above 1 add shape nodes that merging removes.
    pub segments: u32,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 12,
            cols: 12,
            spacing: 100.0,
            free_speed: 13.9,
            tls_fraction: 0.2,
            tls_ry: 5.0,
            segments: 1,
            seed: 7,
        }
    }
}

impl GridSpec {
    /// Uncontrolled grid with unit-style spacing, handy in tests.
    pub fn small(rows: u32, cols: u32) -> Self {
        GridSpec { rows, cols, tls_fraction: 0.0, ..Default::default() }
    }

    /// Node id of junction (row, col).
    pub fn junction(&self, row: u32, col: u32) -> u32 {
        row * self.cols + col
    }
}

/// Bidirectional grid. Junction (r, c) sits at `(c * spacing, r * spacing)`.
/// Links are emitted edge by edge, forward direction first.
pub fn generate_grid(spec: &GridSpec) -> RoadNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut nodes: Vec<Node> = (0..spec.rows)
        .flat_map(|r| (0..spec.cols).map(move |c| (r, c)))
        .map(|(r, c)| Node {
            id: spec.junction(r, c),
            x: f64::from(c) * spec.spacing,
            y: f64::from(r) * spec.spacing,
        })
        .collect();
    let mut next_node = spec.rows * spec.cols;
    let mut links = Vec::new();
    let segs = spec.segments.max(1);
    let seg_len = spec.spacing / f64::from(segs);

    let mut edges = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            if c + 1 < spec.cols {
                edges.push((spec.junction(r, c), spec.junction(r, c + 1)));
            }
            if r + 1 < spec.rows {
                edges.push((spec.junction(r, c), spec.junction(r + 1, c)));
            }
        }
    }
    for (a, b) in edges {
        let (ax, ay) = (nodes[a as usize].x, nodes[a as usize].y);
        let (bx, by) = (nodes[b as usize].x, nodes[b as usize].y);
        let mut chain = vec![a];
        for k in 1..segs {
            let t = f64::from(k) / f64::from(segs);
            nodes.push(Node { id: next_node, x: ax + (bx - ax) * t, y: ay + (by - ay) * t });
            chain.push(next_node);
            next_node += 1;
        }
        chain.push(b);
        for path in [chain.clone(), chain.into_iter().rev().collect::<Vec<_>>()] {
            let controlled = rng.gen_bool(spec.tls_fraction.clamp(0.0, 1.0));
            for (k, w) in path.windows(2).enumerate() {
                let last = k + 2 == path.len();
                links.push(RoadLink {
                    id: links.len() as u32,
                    from: w[0],
                    to: w[1],
                    length: seg_len,
                    free_speed: spec.free_speed,
                    tls_ry: if controlled && last { spec.tls_ry } else { 0.0 },
                });
            }
        }
    }
    RoadNetwork::new(nodes, links).expect("generated grid is valid")
}
