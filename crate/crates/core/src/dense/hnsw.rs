//! Hierarchical navigable small world graph for approximate cosine search.
//!
//! Links are kept symmetric: a link is added only when both endpoints accept
//! it, and a full endpoint makes room by dropping its weakest link in both
//! directions. Pruning never strands a node without links. After all
//! insertions, one refinement pass re-searches every node's layer-0
//! neighborhood in the finished graph, and a final pass reconnects any
//! component the pruning split off, so every node stays reachable from the
//! entry point.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DocMask, QueryVector, VectorStore};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::search::{by_score_then_id, top_k_by, SearchHit};

const MAGIC: &[u8; 4] = b"HNS1";
const VERSION: u8 = 1;
const MAX_LEVEL: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Max links per node on layers above 0; layer 0 allows twice as many.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub level_seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams { m: 16, ef_construction: 200, ef_search: 100, level_seed: 0 }
    }
}

impl HnswParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid("M must be at least 2"));
        }
        if self.ef_construction < self.m {
            return Err(Error::invalid("ef_construction must be at least M"));
        }
        if self.ef_search == 0 {
            return Err(Error::invalid("ef_search must be at least 1"));
        }
        Ok(())
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Near {
    dist: f64,
    node: u32,
}

impl Eq for Near {}

impl Ord for Near {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Near {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited {
    stamp: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited { stamp: vec![0; n], epoch: 0 }
    }

    fn reset(&mut self) {
        self.epoch += 1;
    }

    /// Marks `node`; true if it was not yet visited in this epoch.
    fn insert(&mut self, node: u32) -> bool {
        let slot = &mut self.stamp[node as usize];
        let fresh = *slot != self.epoch;
        *slot = self.epoch;
        fresh
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnswIndex {
    params: HnswParams,
    store: VectorStore,
    /// Unit-normalized copies of the stored vectors, flat.
    unit: Vec<f32>,
    levels: Vec<u8>,
    /// links[node][layer]
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
}

impl HnswIndex {
    /// Inserts every vector of `store` in store order.
    pub fn build(store: VectorStore, params: HnswParams) -> Result<Self> {
        params.validate()?;
        let mut index = HnswIndex {
            params,
            unit: Vec::with_capacity(store.len() * store.dim()),
            levels: Vec::with_capacity(store.len()),
            links: Vec::with_capacity(store.len()),
            entry: None,
            store: VectorStore::new(store.dim()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.level_seed);
        let level_mult = 1.0 / (params.m as f64).ln();
        let mut visited = Visited::new(store.len());
        for u in 0..store.len() as u32 {
            let level = draw_level(&mut rng, level_mult);
            let node = index.store.insert(store.unit_id(u), store.doc_id(store.doc_of(u)), store.vector(u))?;
            index.push_unit(node);
            index.insert_node(node, level, &mut visited);
        }
        index.refine(&mut visited);
        index.repair_connectivity();
        Ok(index)
    }

    /// Builds from `(unit_id, doc_id, vector)` records.
    pub fn build_from<I, S, T>(dim: usize, records: I, params: HnswParams) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T, Vec<f32>)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut store = VectorStore::new(dim);
        for (id, doc, v) in records {
            store.insert(id.as_ref(), doc.as_ref(), &v)?;
        }
        Self::build(store, params)
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn entry_point(&self) -> Option<u32> {
        self.entry
    }

    pub fn level(&self, node: u32) -> usize {
        self.levels[node as usize] as usize
    }

    pub fn neighbors(&self, node: u32, layer: usize) -> &[u32] {
        &self.links[node as usize][layer]
    }

    pub fn max_level(&self) -> usize {
        self.entry.map_or(0, |e| self.level(e))
    }

    fn push_unit(&mut self, node: u32) {
        let v = self.store.vector(node);
        let n = self.store.norm(node);
        self.unit.extend(v.iter().map(|&x| (x as f64 / n) as f32));
    }

    fn unit_vec(&self, node: u32) -> &[f32] {
        let d = self.store.dim();
        &self.unit[node as usize * d..(node as usize + 1) * d]
    }

    fn dist_nodes(&self, a: u32, b: u32) -> f64 {
        let dot: f64 = self.unit_vec(a).iter().zip(self.unit_vec(b)).map(|(&x, &y)| x as f64 * y as f64).sum();
        1.0 - dot
    }

    fn dist_query(&self, q: &[f64], node: u32) -> f64 {
        1.0 - super::dot_f64(q, self.unit_vec(node))
    }

    /// Beam search on one layer. Only nodes admitted by `admit` enter the
    /// result set, but every node routes the traversal.
    fn search_layer<D, A>(&self, dist: D, entries: &[Near], ef: usize, layer: usize, visited: &mut Visited, admit: A) -> Vec<Near>
    where
        D: Fn(u32) -> f64,
        A: Fn(u32) -> bool,
    {
        visited.reset();
        let mut candidates: BinaryHeap<Reverse<Near>> = BinaryHeap::new();
        let mut results: BinaryHeap<Near> = BinaryHeap::new();
        for &e in entries {
            if visited.insert(e.node) {
                candidates.push(Reverse(e));
                if admit(e.node) {
                    results.push(e);
                }
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(c)) = candidates.pop() {
            if results.len() >= ef && c.dist > results.peek().map_or(f64::INFINITY, |w| w.dist) {
                break;
            }
            for &n in &self.links[c.node as usize][layer] {
                if !visited.insert(n) {
                    continue;
                }
                let d = dist(n);
                let worst = results.peek().map_or(f64::INFINITY, |w| w.dist);
                if results.len() < ef || d < worst {
                    let near = Near { dist: d, node: n };
                    candidates.push(Reverse(near));
                    if admit(n) {
                        results.push(near);
                        if results.len() > ef {
                            results.pop();
                        }
                    }
                }
            }
        }
        let mut out = results.into_vec();
        out.sort_unstable();
        out
    }

    /// Neighbor-selection heuristic: a candidate is preferred when it is
    /// closer to the base than to every already preferred candidate; the
    /// rest fill remaining slots by distance. Returns the full priority order.
    fn priority_order(&self, sorted: &[Near]) -> Vec<Near> {
        let mut kept: Vec<Near> = Vec::with_capacity(sorted.len());
        let mut pruned = Vec::new();
        for &c in sorted {
            if kept.iter().all(|k| self.dist_nodes(c.node, k.node) > c.dist) {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        kept.extend(pruned);
        kept
    }

    fn insert_node(&mut self, node: u32, level: usize, visited: &mut Visited) {
        self.levels.push(level as u8);
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(node);
            return;
        };
        let top = self.max_level();
        let mut eps = vec![Near { dist: self.dist_nodes(node, entry), node: entry }];
        for layer in (level + 1..=top).rev() {
            eps = self.search_layer(|n| self.dist_nodes(node, n), &eps, 1, layer, visited, |_| true);
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(|n| self.dist_nodes(node, n), &eps, self.params.ef_construction, layer, visited, |_| true);
            let order = self.priority_order(&found);
            for &nb in order.iter().take(self.params.max_links(layer)) {
                self.connect(node, nb.node, layer);
            }
            if self.links[node as usize][layer].is_empty() {
                self.connect_isolated(node, &order, layer);
            }
            eps = found;
        }
        if level > top {
            self.entry = Some(node);
        }
    }

    /// Second pass over layer 0: each node searches the finished graph for
    /// its neighborhood and offers links to candidates it lacks. Early
    /// insertions only saw a small graph, so this mostly helps them.
    fn refine(&mut self, visited: &mut Visited) {
        let Some(entry) = self.entry else { return };
        for node in 0..self.len() as u32 {
            let mut eps = vec![Near { dist: self.dist_nodes(node, entry), node: entry }];
            for layer in (1..=self.max_level()).rev() {
                eps = self.search_layer(|n| self.dist_nodes(node, n), &eps, 1, layer, visited, |_| true);
            }
            let found = self.search_layer(|n| self.dist_nodes(node, n), &eps, self.params.ef_construction, 0, visited, |n| n != node);
            let order = self.priority_order(&found);
            for nb in order.iter().take(self.params.max_links(0)) {
                self.connect(node, nb.node, 0);
            }
        }
    }

    fn unlink(&mut self, a: u32, b: u32, layer: usize) {
        self.links[a as usize][layer].retain(|&x| x != b);
        self.links[b as usize][layer].retain(|&x| x != a);
    }

    /// Link `x` would give up to make room for `y`: `None` when it has room,
    /// `Some(y)` when `y` loses, else the evicted neighbor. A neighbor is only
    /// evicted if that leaves it with another link.
    fn eviction(&self, x: u32, y: u32, layer: usize) -> Option<u32> {
        if self.links[x as usize][layer].len() < self.params.max_links(layer) {
            return None;
        }
        let mut cands: Vec<Near> = self.links[x as usize][layer]
            .iter()
            .chain(std::iter::once(&y))
            .map(|&n| Near { dist: self.dist_nodes(x, n), node: n })
            .collect();
        cands.sort_unstable();
        let order = self.priority_order(&cands);
        let victim = order.iter().rev().find(|c| c.node == y || self.links[c.node as usize][layer].len() > 1);
        Some(victim.map_or(y, |v| v.node))
    }

    /// Adds the undirected edge `a`–`b` if both endpoints accept it, evicting
    /// a weaker neighbor from a full endpoint. Returns whether it was added.
    fn connect(&mut self, a: u32, b: u32, layer: usize) -> bool {
        if a == b || self.links[a as usize][layer].contains(&b) {
            return false;
        }
        let va = self.eviction(a, b, layer);
        let vb = self.eviction(b, a, layer);
        if va == Some(b) || vb == Some(a) {
            return false;
        }
        if let Some(v) = va {
            self.unlink(a, v, layer);
        }
        if let Some(v) = vb {
            if self.links[b as usize][layer].contains(&v) {
                self.unlink(b, v, layer);
            }
        }
        self.links[a as usize][layer].push(b);
        self.links[b as usize][layer].push(a);
        true
    }

    /// Every pruning contest rejected `node`; attach it to the nearest node
    /// with spare capacity, looking one hop beyond the candidates if needed.
    fn connect_isolated(&mut self, node: u32, order: &[Near], layer: usize) {
        let cap = self.params.max_links(layer);
        let mut pool: Vec<u32> = order.iter().map(|c| c.node).collect();
        for c in order {
            pool.extend(self.links[c.node as usize][layer].iter().copied());
        }
        let target = pool
            .into_iter()
            .filter(|&n| n != node && self.links[n as usize][layer].len() < cap)
            .min_by(|&a, &b| self.dist_nodes(node, a).total_cmp(&self.dist_nodes(node, b)).then(a.cmp(&b)));
        if let Some(t) = target {
            self.links[node as usize][layer].push(t);
            self.links[t as usize][layer].push(node);
        }
    }

    /// Layer-0 nodes reachable from the entry point.
    pub fn reachable_from_entry(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let Some(entry) = self.entry else { return seen };
        let mut queue = VecDeque::from([entry]);
        seen[entry as usize] = true;
        while let Some(n) = queue.pop_front() {
            for &m in &self.links[n as usize][0] {
                if !seen[m as usize] {
                    seen[m as usize] = true;
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    fn repair_connectivity(&mut self) {
        let cap = self.params.max_links(0);
        loop {
            let seen = self.reachable_from_entry();
            let Some(stray) = seen.iter().position(|s| !s) else { return };
            let stray = stray as u32;
            let target = (0..self.len() as u32)
                .filter(|&n| seen[n as usize])
                .min_by(|&a, &b| {
                    let full = |n: u32| self.links[n as usize][0].len() >= cap;
                    full(a).cmp(&full(b)).then(self.dist_nodes(stray, a).total_cmp(&self.dist_nodes(stray, b))).then(a.cmp(&b))
                })
                .expect("entry is reachable");
            if self.links[target as usize][0].len() >= cap {
                // every reachable node is full: free a slot on the target
                let far = self.links[target as usize][0]
                    .iter()
                    .copied()
                    .filter(|&n| self.links[n as usize][0].len() > 1)
                    .max_by(|&a, &b| self.dist_nodes(target, a).total_cmp(&self.dist_nodes(target, b)));
                match far {
                    Some(f) => self.unlink(target, f, 0),
                    None => return,
                }
            }
            if self.links[stray as usize][0].len() >= cap {
                let far = self.links[stray as usize][0]
                    .iter()
                    .copied()
                    .max_by(|&a, &b| self.dist_nodes(stray, a).total_cmp(&self.dist_nodes(stray, b)))
                    .expect("full list is non-empty");
                self.unlink(stray, far, 0);
            }
            self.links[stray as usize][0].push(target);
            self.links[target as usize][0].push(stray);
        }
    }

    /// Approximate top-k by cosine. Excluded documents' paragraphs are
    /// traversed but never returned.
    pub fn search(&self, query: &QueryVector, excluded: &HashSet<String>, k: usize, ef_search: usize) -> Result<Vec<SearchHit>> {
        self.search_masked(query, &self.store.mask_excluding(excluded), k, ef_search)
    }

    pub fn search_masked(&self, query: &QueryVector, mask: &DocMask, k: usize, ef_search: usize) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if k > ef_search {
            return Err(Error::invalid(format!("k ({k}) must not exceed ef_search ({ef_search})")));
        }
        let Some(entry) = self.entry else { return Ok(Vec::new()) };
        let q = self.store.check_query(query)?;
        let mut visited = Visited::new(self.len());
        let dist = |n: u32| self.dist_query(&q, n);
        let mut eps = vec![Near { dist: dist(entry), node: entry }];
        for layer in (1..=self.max_level()).rev() {
            eps = self.search_layer(dist, &eps, 1, layer, &mut visited, |_| true);
        }
        let found = self.search_layer(dist, &eps, ef_search, 0, &mut visited, |n| mask.allows(self.store.doc_of(n)));
        let scored: Vec<(f64, u32)> = found.into_iter().map(|n| (self.store.score(&q, n.node), n.node)).collect();
        let top = top_k_by(scored, k, |a, b| {
            by_score_then_id((a.0, self.store.unit_id(a.1)), (b.0, self.store.unit_id(b.1)))
        });
        Ok(top.into_iter().enumerate().map(|(i, (s, u))| self.store.hit(u, s, i + 1)).collect())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u8(&mut w, VERSION)?;
        write_u32(&mut w, count_u32(self.store.dim(), "dimensions")?)?;
        write_u32(&mut w, count_u32(self.params.m, "M")?)?;
        write_u32(&mut w, count_u32(self.params.ef_construction, "ef_construction")?)?;
        write_u32(&mut w, count_u32(self.params.ef_search, "ef_search")?)?;
        write_u64(&mut w, self.params.level_seed)?;
        write_u32(&mut w, count_u32(self.len(), "nodes")?)?;
        write_u32(&mut w, self.entry.unwrap_or(u32::MAX))?;
        for node in 0..self.len() as u32 {
            write_str(&mut w, self.store.unit_id(node))?;
            write_str(&mut w, self.store.doc_id(self.store.doc_of(node)))?;
            for &x in self.store.vector(node) {
                write_f32(&mut w, x)?;
            }
            write_u8(&mut w, self.levels[node as usize])?;
            for layer in &self.links[node as usize] {
                write_u32(&mut w, count_u32(layer.len(), "links")?)?;
                for &n in layer {
                    write_u32(&mut w, n)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        expect_magic(&mut r, MAGIC)?;
        let version = read_u8(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported HNSW version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let params = HnswParams {
            m: read_u32(&mut r)? as usize,
            ef_construction: read_u32(&mut r)? as usize,
            ef_search: read_u32(&mut r)? as usize,
            level_seed: read_u64(&mut r)?,
        };
        params.validate().map_err(|e| Error::Format(e.to_string()))?;
        let n = read_u32(&mut r)? as usize;
        let entry = match read_u32(&mut r)? {
            u32::MAX => None,
            e if (e as usize) < n => Some(e),
            e => return Err(Error::Format(format!("entry point {e} out of range"))),
        };
        let mut index = HnswIndex {
            params,
            store: VectorStore::new(dim),
            unit: Vec::with_capacity(n * dim),
            levels: Vec::with_capacity(n),
            links: Vec::with_capacity(n),
            entry,
        };
        let mut v = vec![0f32; dim];
        for _ in 0..n {
            let id = read_str(&mut r)?;
            let doc = read_str(&mut r)?;
            for x in v.iter_mut() {
                *x = read_f32(&mut r)?;
            }
            let node = index.store.insert(&id, &doc, &v)?;
            index.push_unit(node);
            let level = read_u8(&mut r)?;
            if level as usize > MAX_LEVEL {
                return Err(Error::Format(format!("level {level} too large")));
            }
            let mut layers = Vec::with_capacity(level as usize + 1);
            for _ in 0..=level {
                let len = read_u32(&mut r)? as usize;
                let mut list = Vec::with_capacity(len.min(1024));
                for _ in 0..len {
                    let m = read_u32(&mut r)?;
                    if m as usize >= n {
                        return Err(Error::Format(format!("link to missing node {m}")));
                    }
                    list.push(m);
                }
                layers.push(list);
            }
            index.levels.push(level);
            index.links.push(layers);
        }
        Ok(index)
    }

    /// Checks symmetry, degree bounds and layer membership of every link.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for node in 0..self.len() as u32 {
            for (layer, list) in self.links[node as usize].iter().enumerate() {
                if list.len() > self.params.max_links(layer) {
                    return Err(format!("node {node} has {} links on layer {layer}", list.len()));
                }
                let distinct: HashSet<&u32> = list.iter().collect();
                if distinct.len() != list.len() || distinct.contains(&node) {
                    return Err(format!("node {node} has duplicate or self links on layer {layer}"));
                }
                for &m in list {
                    if self.level(m) < layer {
                        return Err(format!("link {node}->{m} on layer {layer} above {m}'s level"));
                    }
                    if !self.links[m as usize][layer].contains(&node) {
                        return Err(format!("link {node}->{m} on layer {layer} is one-way"));
                    }
                }
            }
        }
        if let Some(e) = self.entry {
            if (0..self.len() as u32).any(|n| self.level(n) > self.level(e)) {
                return Err("entry point is not on the top layer".into());
            }
        }
        Ok(())
    }
}

fn draw_level(rng: &mut impl Rng, mult: f64) -> usize {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    ((-u.ln() * mult).floor() as usize).min(MAX_LEVEL)
}
