//! Undirected area adjacency graphs.

use std::path::Path;

use crate::error::{Error, Result};

/// Symmetric adjacency over `n` areas with no self-loops, connected as a
/// single component. Connectivity is required because the intrinsic CAR
/// built from the graph must have exactly one null direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AreaGraph {
    n: usize,
    neighbors: Vec<Vec<usize>>,
}

impl AreaGraph {
    /// Builds from 0-based neighbor lists, validating symmetry, range,
    /// absence of self-loops, and connectedness.
    pub fn new(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        if n == 0 {
            return Err(Error::invalid("graph needs at least one area"));
        }
        let mut sorted: Vec<Vec<usize>> = Vec::with_capacity(n);
        for (i, mut nb) in neighbors.into_iter().enumerate() {
            nb.sort_unstable();
            nb.dedup();
            for &j in &nb {
                if j >= n {
                    return Err(Error::invalid(format!(
                        "area {i}: neighbor {j} out of range (n = {n})"
                    )));
                }
                if j == i {
                    return Err(Error::invalid(format!("area {i}: self-loop")));
                }
            }
            sorted.push(nb);
        }
        for i in 0..n {
            for &j in &sorted[i] {
                if sorted[j].binary_search(&i).is_err() {
                    return Err(Error::invalid(format!(
                        "asymmetric adjacency: {i} lists {j} but not vice versa"
                    )));
                }
            }
        }
        let g = AreaGraph {
            n,
            neighbors: sorted,
        };
        if !g.is_connected() {
            return Err(Error::invalid("graph is not connected"));
        }
        Ok(g)
    }

    /// Builds from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        AreaGraph::new(neighbors)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }

    pub fn n_areas(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Each undirected edge once, as (i, j) with i < j.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for &j in &self.neighbors[i] {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(|nb| nb.len()).sum::<usize>() / 2
    }

    /// Parses the plain-text adjacency format: data line i lists the
    /// 1-based neighbor ids of area i, whitespace separated. Lines that
    /// are blank or start with `#` are skipped. Symmetry and
    /// connectedness are validated as in [`AreaGraph::new`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut neighbors = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut nb = Vec::new();
            for tok in line.split_whitespace() {
                let id: usize = tok.parse().map_err(|_| {
                    Error::parse(
                        "graph file",
                        format!("line {}: bad id {tok:?}", line_no + 1),
                    )
                })?;
                if id == 0 {
                    return Err(Error::parse(
                        "graph file",
                        format!("line {}: ids are 1-based", line_no + 1),
                    ));
                }
                nb.push(id - 1);
            }
            neighbors.push(nb);
        }
        AreaGraph::new(neighbors)
    }

    /// Loads the plain-text adjacency format from a file.
    pub fn load(path: &Path) -> Result<Self> {
        AreaGraph::parse(&std::fs::read_to_string(path)?)
    }

    /// Writes the same plain-text format [`AreaGraph::load`] reads.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.n {
            let ids: Vec<String> = self.neighbors[i]
                .iter()
                .map(|j| (j + 1).to_string())
                .collect();
            out.push_str(&ids.join(" "));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// The nine South African provinces with their land borders, in the
    /// order Western Cape, Eastern Cape, Northern Cape, Free State,
    /// KwaZulu-Natal, North West, Gauteng, Mpumalanga, Limpopo. Ships as
    /// a data file so it can be swapped for any other connected graph.
    pub fn south_africa_provinces() -> Self {
        AreaGraph::parse(include_str!("../../data/south_africa_provinces.txt"))
            .expect("bundled adjacency file is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_path() {
        let g = AreaGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn rejects_asymmetry_self_loops_and_disconnection() {
        assert!(AreaGraph::new(vec![vec![1], vec![]]).is_err(), "asymmetric");
        assert!(AreaGraph::new(vec![vec![0]]).is_err(), "self-loop");
        assert!(
            AreaGraph::from_edges(4, &[(0, 1), (2, 3)]).is_err(),
            "two components"
        );
        assert!(AreaGraph::new(vec![]).is_err(), "empty");
    }

    #[test]
    fn single_node_graph_is_connected() {
        let g = AreaGraph::new(vec![vec![]]).unwrap();
        assert_eq!(g.n_areas(), 1);
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let g = AreaGraph::from_edges(3, &[(0, 1), (1, 0), (1, 2)]).unwrap();
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn parse_round_trip() {
        let text = "# comment line\n2 3\n1 3\n1 2\n";
        let g = AreaGraph::parse(text).unwrap();
        assert_eq!(g.n_areas(), 3);
        assert_eq!(g.n_edges(), 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        g.save(&path).unwrap();
        assert_eq!(AreaGraph::load(&path).unwrap(), g);
    }

    #[test]
    fn parse_rejects_zero_ids_and_asymmetry() {
        assert!(
            AreaGraph::parse("0 2\n1\n").is_err(),
            "0 is not a valid 1-based id"
        );
        assert!(
            AreaGraph::parse("2\n\n").is_err(),
            "blank data lines drop an area"
        );
        assert!(AreaGraph::parse("2\n3\n1\n").is_err(), "asymmetric");
    }

    #[test]
    fn bundled_nine_province_graph() {
        let g = AreaGraph::south_africa_provinces();
        assert_eq!(g.n_areas(), 9);
        // Free State (index 3) touches six provinces; the overall border
        // count is seventeen.
        assert_eq!(g.degree(3), 6);
        assert_eq!(g.n_edges(), 17);
    }
}
