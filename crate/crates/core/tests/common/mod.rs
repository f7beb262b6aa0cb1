//! Random valid networks for property tests.

#![allow(dead_code)]

use lbvn::network::{Network, NetworkSpec, NodeId, Pipe, PipeId};
use proptest::prelude::*;

/// Series-parallel shape; emitted with connector pipes so that no node both
/// merges and splits.
#[derive(Debug, Clone)]
pub enum Shape {
    Pipe,
    Series(Vec<Shape>),
    Parallel(Vec<Shape>),
}

pub fn shape() -> impl Strategy<Value = Shape> {
    let leaf = Just(Shape::Pipe);
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Shape::Series),
            prop::collection::vec(inner, 2..4).prop_map(Shape::Parallel),
        ]
    })
}

struct Emitter<'a> {
    next_node: u32,
    edges: Vec<(u32, u32)>,
    geometry: &'a [(f64, f64)],
}

impl Emitter<'_> {
    fn node(&mut self) -> u32 {
        self.next_node += 1;
        self.next_node
    }

    fn edge(&mut self, from: u32, to: u32) {
        self.edges.push((from, to));
    }

    /// Emits `s` between `from` (entered by exactly one pipe) and `to`
    /// (left by exactly one pipe).
    fn emit(&mut self, s: &Shape, from: u32, to: u32) {
        match s {
            Shape::Pipe => self.edge(from, to),
            Shape::Series(parts) => {
                let mut at = from;
                for (k, part) in parts.iter().enumerate() {
                    let end = if k + 1 == parts.len() { to } else { self.node() };
                    if matches!(part, Shape::Pipe) {
                        self.edge(at, end);
                    } else {
                        let (a, b) = (self.node(), self.node());
                        self.edge(at, a);
                        self.emit(part, a, b);
                        self.edge(b, end);
                    }
                    at = end;
                }
            }
            Shape::Parallel(branches) => {
                for b in branches {
                    if matches!(b, Shape::Pipe) {
                        self.edge(from, to);
                    } else {
                        let (x, y) = (self.node(), self.node());
                        self.edge(from, x);
                        self.emit(b, x, y);
                        self.edge(y, to);
                    }
                }
            }
        }
    }
}

/// Inlet pipe, shape, outlet pipe. Geometry is cycled from `geometry`.
pub fn realize(s: &Shape, geometry: &[(f64, f64)]) -> Network {
    let mut e = Emitter {
        next_node: 4,
        edges: vec![(1, 3)],
        geometry,
    };
    e.emit(s, 3, 4);
    e.edge(4, 2);
    let pipes = e
        .edges
        .iter()
        .enumerate()
        .map(|(k, &(from, to))| {
            let (length, radius) = e.geometry[k % e.geometry.len()];
            Pipe {
                id: PipeId(k as u32 + 1),
                from: NodeId(from),
                to: NodeId(to),
                length,
                radius,
            }
        })
        .collect();
    Network::build(NetworkSpec {
        label: None,
        nodes: Vec::new(),
        pipes,
    })
    .expect("emitted shapes are valid networks")
}

pub fn geometry() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.01f64..0.2, 3e-4f64..2e-3), 1..8)
}

pub fn network(max_pipes: usize) -> impl Strategy<Value = Network> {
    (shape(), geometry())
        .prop_map(|(s, g)| realize(&s, &g))
        .prop_filter("too many pipes", move |n| n.pipe_count() <= max_pipes)
}
