//! The synthetic network family for dispersion-space experiments: four
//! template networks, each simplified six times by removing one pipe.
//!
//! Lengths are whole centimeters and every pipe has a 1 mm radius. Only
//! single-pipe parallel branches are removed, so every member is a valid
//! network. Class 3 collapses to a single path; every other member keeps at
//! least two paths.

use crate::network::{Network, NetworkError, NetworkSpec, NodeId, Pipe, PipeId};

pub const FAMILY_RADIUS: f64 = 1e-3;
/// Inlet flow rate used for the family, m³/s.
pub const FAMILY_FLOW_RATE: f64 = 1e-7;
pub const REMOVALS: usize = 6;

/// `(id, from, to, length in cm)`
type Edge = (u32, u32, u32, u32);

pub struct Template {
    pub class: u32,
    pub edges: &'static [Edge],
    /// Pipe ids in removal order.
    pub removal: [u32; REMOVALS],
}

// Consecutive bundles are joined by a single pipe: a node may merge or
// split, never both.

/// Short, mildly asymmetric bundles.
const CLASS_1: &[Edge] = &[
    (1, 1, 2, 2),
    (2, 2, 3, 2),
    (3, 2, 3, 3),
    (4, 2, 3, 4),
    (5, 2, 3, 5),
    (6, 2, 3, 6),
    (7, 3, 4, 1),
    (8, 4, 5, 2),
    (9, 4, 5, 3),
    (10, 4, 5, 4),
    (11, 4, 5, 5),
    (12, 5, 6, 3),
];

/// Branches of strongly different length.
const CLASS_2: &[Edge] = &[
    (1, 1, 2, 2),
    (2, 2, 3, 2),
    (3, 2, 3, 5),
    (4, 2, 3, 8),
    (5, 2, 3, 11),
    (6, 2, 3, 14),
    (7, 2, 3, 17),
    (8, 3, 4, 1),
    (9, 4, 5, 2),
    (10, 4, 5, 6),
    (11, 4, 5, 10),
    (12, 5, 6, 3),
];

/// A short chain with detours; the last member is a single path.
const CLASS_3: &[Edge] = &[
    (1, 1, 2, 2),
    (2, 2, 3, 2),
    (3, 3, 4, 1),
    (4, 4, 5, 2),
    (5, 2, 3, 4),
    (6, 2, 3, 6),
    (7, 2, 3, 8),
    (8, 4, 5, 4),
    (9, 4, 5, 5),
    (10, 4, 5, 7),
    (11, 5, 6, 2),
];

/// Long network with branches of similar length.
const CLASS_4: &[Edge] = &[
    (1, 1, 2, 4),
    (2, 2, 3, 6),
    (3, 2, 3, 7),
    (4, 2, 3, 8),
    (5, 2, 3, 9),
    (6, 3, 4, 1),
    (7, 4, 5, 6),
    (8, 4, 5, 7),
    (9, 4, 5, 8),
    (10, 5, 6, 1),
    (11, 6, 7, 5),
    (12, 6, 7, 6),
    (13, 6, 7, 7),
    (14, 7, 8, 4),
];

pub const TEMPLATES: [Template; 4] = [
    Template {
        class: 1,
        edges: CLASS_1,
        removal: [6, 11, 5, 10, 4, 9],
    },
    Template {
        class: 2,
        edges: CLASS_2,
        removal: [7, 11, 6, 10, 5, 4],
    },
    Template {
        class: 3,
        edges: CLASS_3,
        removal: [7, 10, 6, 9, 5, 8],
    },
    Template {
        class: 4,
        edges: CLASS_4,
        removal: [5, 9, 13, 4, 8, 12],
    },
];

impl Template {
    pub fn network(&self) -> Result<Network, NetworkError> {
        Network::build(NetworkSpec {
            label: Some(label(self.class, 0)),
            nodes: Vec::new(),
            pipes: self
                .edges
                .iter()
                .map(|&(id, from, to, cm)| Pipe {
                    id: PipeId(id),
                    from: NodeId(from),
                    to: NodeId(to),
                    length: cm as f64 * 1e-2,
                    radius: FAMILY_RADIUS,
                })
                .collect(),
        })
    }

    /// The template followed by its six simplifications.
    pub fn members(&self) -> Result<Vec<Network>, NetworkError> {
        let mut current = self.network()?;
        let mut out = vec![current.clone()];
        for (step, &id) in self.removal.iter().enumerate() {
            let mut spec = current.without_pipe(PipeId(id))?;
            spec.label = Some(label(self.class, step + 1));
            current = Network::build(spec)?;
            out.push(current.clone());
        }
        Ok(out)
    }
}

/// `c{class}-{removals}`
pub fn label(class: u32, removed: usize) -> String {
    format!("c{class}-{removed}")
}

/// All 28 networks, labelled, in template order.
pub fn family() -> Result<Vec<(String, Network)>, NetworkError> {
    let mut out = Vec::new();
    for t in &TEMPLATES {
        for net in t.members()? {
            let label = net.label().expect("members are labelled").to_string();
            out.push((label, net));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_eight_valid_members() {
        let fam = family().unwrap();
        assert_eq!(fam.len(), 28);
        let mut labels: Vec<_> = fam.iter().map(|(l, _)| l.clone()).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 28);
        for t in &TEMPLATES {
            let members = t.members().unwrap();
            for pair in members.windows(2) {
                assert_eq!(pair[1].pipe_count() + 1, pair[0].pipe_count());
                let count = |n: &Network| n.enumerate_paths(n.inlet(), n.outlet()).unwrap().len();
                assert!(count(&pair[1]) <= count(&pair[0]));
            }
        }
    }

    #[test]
    fn only_class_three_ends_single_path() {
        let single: Vec<String> = family()
            .unwrap()
            .into_iter()
            .filter(|(_, n)| n.enumerate_paths(n.inlet(), n.outlet()).unwrap().len() == 1)
            .map(|(l, _)| l)
            .collect();
        assert_eq!(single, vec!["c3-6".to_string()]);
    }

    #[test]
    fn every_pipe_is_one_millimeter() {
        for (_, n) in family().unwrap() {
            assert!(n.pipes().iter().all(|p| p.radius == FAMILY_RADIUS));
        }
    }
}
