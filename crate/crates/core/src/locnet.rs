//! Data-driven location network: DBSCAN clustering of message coordinates
//! into nodes, nearest-node assignment, same-day movement edges, and
//! edge-weighted PageRank.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{Error, NodeId, Result};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationNode {
    pub node_id: NodeId,
    pub name: Option<String>,
    pub centroid: (f64, f64),
    pub member_count: usize,
    pub radius_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps_km: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps_km: 5.0,
            min_pts: 100,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_km > 0.0 && self.eps_km.is_finite()) {
            return Err(Error::config("eps_km", "must be positive"));
        }
        if self.min_pts < 1 {
            return Err(Error::config("min_pts", "must be at least 1"));
        }
        Ok(())
    }
}

fn cmp_point(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Grid over lat/lon with cells at least `eps` wide, so every neighbour of a
/// point lies in the 3x3 block around its cell.
struct Grid {
    lat_step: f64,
    lon_step: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    /// `None` when the data is too close to a pole or spans the antimeridian.
    fn build(points: &[(f64, f64)], eps_km: f64) -> Option<Self> {
        let km_per_deg = EARTH_RADIUS_KM.to_radians();
        let lat_step = eps_km / km_per_deg;
        let max_abs_lat = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max) + lat_step;
        if max_abs_lat >= 80.0 {
            return None;
        }
        let (lo, hi) = points
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
        if hi - lo > 180.0 {
            return None;
        }
        // widen by 1% to absorb the small-angle approximation
        let lon_step = 1.01 * lat_step / max_abs_lat.to_radians().cos();
        let lat_step = 1.01 * lat_step;
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(((p.0 / lat_step).floor() as i64, (p.1 / lon_step).floor() as i64))
                .or_default()
                .push(i);
        }
        Some(Self {
            lat_step,
            lon_step,
            cells,
        })
    }

    fn for_each_candidate(&self, p: (f64, f64), mut f: impl FnMut(usize)) {
        let (ci, cj) = ((p.0 / self.lat_step).floor() as i64, (p.1 / self.lon_step).floor() as i64);
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(idx) = self.cells.get(&(ci + di, cj + dj)) {
                    idx.iter().for_each(|&i| f(i));
                }
            }
        }
    }
}

struct Neighbours<'a> {
    points: &'a [(f64, f64)],
    eps_km: f64,
    grid: Option<Grid>,
}

impl<'a> Neighbours<'a> {
    fn new(points: &'a [(f64, f64)], eps_km: f64) -> Self {
        Self {
            points,
            eps_km,
            grid: Grid::build(points, eps_km),
        }
    }

    /// Calls `f(j, dist)` for every `j` (including `i`) within eps of point `i`.
    fn visit(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        let p = self.points[i];
        let check = |j: usize| {
            let d = haversine_km(p, self.points[j]);
            if d <= self.eps_km {
                f(j, d);
            }
        };
        match &self.grid {
            Some(g) => g.for_each_candidate(p, check),
            None => (0..self.points.len()).for_each(check),
        }
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// DBSCAN cluster labels: `labels[i]` is `Some(cluster)` or `None` for noise.
///
/// Core points form clusters by connectivity; a border point joins the
/// cluster of its nearest core neighbour (ties: smallest core coordinate),
/// which makes the partition independent of input order. Cluster numbers
/// are arbitrary here; [`cluster`] orders them.
pub fn dbscan_labels(points: &[(f64, f64)], params: DbscanParams) -> Result<Vec<Option<usize>>> {
    params.validate()?;
    let n = points.len();
    let nb = Neighbours::new(points, params.eps_km);
    let core: Vec<bool> = (0..n)
        .map(|i| {
            let mut count = 0usize;
            nb.visit(i, |_, _| count += 1);
            count >= params.min_pts
        })
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in (0..n).filter(|&i| core[i]) {
        nb.visit(i, |j, _| {
            if core[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        });
    }
    let mut root_label: BTreeMap<usize, usize> = BTreeMap::new();
    let mut labels = vec![None; n];
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let next = root_label.len();
            labels[i] = Some(*root_label.entry(r).or_insert(next));
        }
    }
    for i in (0..n).filter(|&i| !core[i]) {
        let mut best: Option<(f64, usize)> = None;
        nb.visit(i, |j, d| {
            if !core[j] {
                return;
            }
            let better = match best {
                None => true,
                Some((bd, bj)) => d < bd || (d == bd && cmp_point(&points[j], &points[bj]) == Ordering::Less),
            };
            if better {
                best = Some((d, j));
            }
        });
        labels[i] = best.and_then(|(_, j)| labels[j]);
    }
    Ok(labels)
}

/// Clusters points into nodes, numbered by descending member count.
pub fn cluster(points: &[(f64, f64)], eps_km: f64, min_pts: usize) -> Result<Vec<LocationNode>> {
    let labels = dbscan_labels(points, DbscanParams { eps_km, min_pts })?;
    Ok(nodes_from_labels(points, &labels))
}

/// Summarises labelled points into ordered [`LocationNode`]s.
pub fn nodes_from_labels(points: &[(f64, f64)], labels: &[Option<usize>]) -> Vec<LocationNode> {
    let mut members: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (p, l) in points.iter().zip(labels) {
        if let Some(l) = l {
            members.entry(*l).or_default().push(*p);
        }
    }
    let mut groups: Vec<Vec<(f64, f64)>> = members
        .into_values()
        .map(|mut m| {
            m.sort_by(cmp_point);
            m
        })
        .collect();
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| cmp_point(&a[0], &b[0])));
    groups
        .into_iter()
        .enumerate()
        .map(|(id, m)| {
            let n = m.len() as f64;
            let centroid = (
                m.iter().map(|p| p.0).sum::<f64>() / n,
                m.iter().map(|p| p.1).sum::<f64>() / n,
            );
            let radius_km = m
                .iter()
                .map(|p| haversine_km(*p, centroid))
                .fold(0.0, f64::max);
            LocationNode {
                node_id: id as NodeId,
                name: None,
                centroid,
                member_count: m.len(),
                radius_km,
            }
        })
        .collect()
}

/// Nearest-centroid assignment within `radius_km + eps_km`.
#[derive(Debug, Clone)]
pub struct Assigner {
    nodes: Vec<LocationNode>,
    eps_km: f64,
}

impl Assigner {
    pub fn new(nodes: &[LocationNode], eps_km: f64) -> Self {
        let mut nodes = nodes.to_vec();
        nodes.sort_by_key(|n| n.node_id);
        Self { nodes, eps_km }
    }

    pub fn assign(&self, lat: f64, lon: f64) -> Option<NodeId> {
        let mut best: Option<(f64, &LocationNode)> = None;
        for node in &self.nodes {
            let d = haversine_km((lat, lon), node.centroid);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, node));
            }
        }
        best.filter(|(d, n)| *d <= n.radius_km + self.eps_km)
            .map(|(_, n)| n.node_id)
    }
}

pub fn assign(message: &crate::ingest::GeoMessage, nodes: &[LocationNode], eps_km: f64) -> Option<NodeId> {
    Assigner::new(nodes, eps_km).assign(message.lat, message.lon)
}

/// A message reduced to what movement counting needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sighting<'a> {
    pub user_id: &'a str,
    pub date: NaiveDate,
    pub node: NodeId,
}

/// Same-day movement weights: for each unordered node pair, the number of
/// distinct users posting from both nodes on the same UTC day, summed over
/// days and divided by `days`. Also returns distinct users per node.
pub fn movement_edges<'a>(
    sightings: impl IntoIterator<Item = Sighting<'a>>,
    days: usize,
) -> Result<(BTreeMap<(NodeId, NodeId), f64>, BTreeMap<NodeId, u64>)> {
    if days == 0 {
        return Err(Error::invalid("movement edges need at least one day"));
    }
    let mut visits: BTreeMap<(NaiveDate, &str), BTreeSet<NodeId>> = BTreeMap::new();
    let mut users: BTreeMap<NodeId, BTreeSet<&str>> = BTreeMap::new();
    for s in sightings {
        visits.entry((s.date, s.user_id)).or_default().insert(s.node);
        users.entry(s.node).or_default().insert(s.user_id);
    }
    let mut counts: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
    for nodes in visits.values() {
        let nodes: Vec<_> = nodes.iter().copied().collect();
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                *counts.entry((a, b)).or_default() += 1;
            }
        }
    }
    let edges = counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / days as f64))
        .collect();
    let population = users.into_iter().map(|(n, u)| (n, u.len() as u64)).collect();
    Ok((edges, population))
}

/// Nodes, symmetric movement edges keyed `(a, b)` with `a < b`, and
/// per-node population (distinct users observed).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocationNetwork {
    pub nodes: Vec<LocationNode>,
    pub edges: BTreeMap<(NodeId, NodeId), f64>,
    pub population: BTreeMap<NodeId, u64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    name: Option<String>,
    centroid: [f64; 2],
    member_count: usize,
    radius_km: f64,
    population: u64,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    a: NodeId,
    b: NodeId,
    weight: f64,
}

impl LocationNetwork {
    pub fn new(
        nodes: Vec<LocationNode>,
        edges: BTreeMap<(NodeId, NodeId), f64>,
        population: BTreeMap<NodeId, u64>,
    ) -> Result<Self> {
        let net = Self {
            nodes,
            edges,
            population,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let ids: BTreeSet<NodeId> = self.nodes.iter().map(|n| n.node_id).collect();
        if ids.len() != self.nodes.len() {
            return Err(Error::invalid("duplicate node ids in network"));
        }
        for (&(a, b), &w) in &self.edges {
            if a >= b {
                return Err(Error::invalid(format!("edge ({a}, {b}) must have a < b")));
            }
            if !ids.contains(&a) || !ids.contains(&b) {
                return Err(Error::invalid(format!("edge ({a}, {b}) references an unknown node")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("edge ({a}, {b}) has invalid weight {w}")));
            }
        }
        Ok(())
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<_> = self.nodes.iter().map(|n| n.node_id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn node(&self, id: NodeId) -> Option<&LocationNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    /// Symmetric edge weight; zero when absent.
    pub fn weight(&self, a: NodeId, b: NodeId) -> f64 {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.get(&key).copied().unwrap_or(0.0)
    }

    /// `(neighbour, weight)` for every positive-weight edge touching `node`.
    pub fn neighbours(&self, node: NodeId) -> Vec<(NodeId, f64)> {
        self.edges
            .iter()
            .filter(|(_, &w)| w > 0.0)
            .filter_map(|(&(a, b), &w)| {
                if a == node {
                    Some((b, w))
                } else if b == node {
                    Some((a, w))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn population_of(&self, node: NodeId) -> u64 {
        self.population.get(&node).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = NetworkFile {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.node_id,
                    name: n.name.clone(),
                    centroid: [n.centroid.0, n.centroid.1],
                    member_count: n.member_count,
                    radius_km: n.radius_km,
                    population: self.population_of(n.node_id),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|(&(a, b), &weight)| EdgeRecord { a, b, weight })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(src)?;
        let population = file.nodes.iter().map(|n| (n.id, n.population)).collect();
        let nodes = file
            .nodes
            .into_iter()
            .map(|n| LocationNode {
                node_id: n.id,
                name: n.name,
                centroid: (n.centroid[0], n.centroid[1]),
                member_count: n.member_count,
                radius_km: n.radius_km,
            })
            .collect();
        let mut edges = BTreeMap::new();
        for e in file.edges {
            let key = if e.a < e.b { (e.a, e.b) } else { (e.b, e.a) };
            if e.a == e.b {
                return Err(Error::invalid(format!("self loop on node {}", e.a)));
            }
            edges.insert(key, e.weight);
        }
        Self::new(nodes, edges, population)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-9,
            max_iter: 200,
        }
    }
}

/// Edge-weighted PageRank by power iteration.
///
/// Each undirected edge is used in both directions; a node moves to its
/// neighbours in proportion to edge weight. Nodes without positive-weight
/// edges spread their mass uniformly. Stops when the L1 change drops below `tol`.
pub fn pagerank(network: &LocationNetwork, params: PageRankParams) -> Result<BTreeMap<NodeId, f64>> {
    if !(params.damping > 0.0 && params.damping < 1.0) {
        return Err(Error::config("damping", "must lie in (0, 1)"));
    }
    if !(params.tol > 0.0) {
        return Err(Error::config("tol", "must be positive"));
    }
    let ids = network.node_ids();
    let n = ids.len();
    if n == 0 {
        return Ok(BTreeMap::new());
    }
    let pos: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut out_links: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(a, b), &w) in &network.edges {
        if w > 0.0 {
            let (ia, ib) = (pos[&a], pos[&b]);
            out_links[ia].push((ib, w));
            out_links[ib].push((ia, w));
        }
    }
    let out_weight: Vec<f64> = out_links.iter().map(|l| l.iter().map(|e| e.1).sum()).collect();
    let d = params.damping;
    let uniform = 1.0 / n as f64;
    let mut rank = vec![uniform; n];
    let mut delta = f64::INFINITY;
    for _ in 0..params.max_iter {
        let dangling: f64 = (0..n).filter(|&i| out_weight[i] <= 0.0).map(|i| rank[i]).sum();
        let base = (1.0 - d) * uniform + d * dangling * uniform;
        let mut next = vec![base; n];
        for i in 0..n {
            if out_weight[i] > 0.0 {
                let share = d * rank[i] / out_weight[i];
                for &(j, w) in &out_links[i] {
                    next[j] += share * w;
                }
            }
        }
        delta = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        if delta < params.tol {
            return Ok(ids.into_iter().zip(rank).collect());
        }
    }
    Err(Error::NonConvergence {
        iterations: params.max_iter,
        delta,
        last: ids.into_iter().zip(rank).collect(),
    })
}
