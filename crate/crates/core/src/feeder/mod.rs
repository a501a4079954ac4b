//! Radial distribution feeder and road-network models.
//!
//! The grid side is a tree of buses and branches rooted at the substation;
//! switches sit on branches and tie branches are normally open. The road
//! side is a separate planar graph crews travel on. Repairable branches
//! carry an asset site (planar coordinates plus a component class) that the
//! hazard surrogates consume, and a road node that crews drive to.

pub mod mask;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hazard::AssetSite;

pub const FEEDER_HEADER: &str = "# stormcrew feeder v1";
pub const ROADS_HEADER: &str = "# stormcrew roads v1";

#[derive(Debug, Clone)]
pub struct Bus {
    pub id: String,
    pub load_kw: f64,
    pub critical: bool,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub capacity_kw: f64,
    pub repairable: bool,
    /// Component class of the attached asset site (repairable branches only).
    pub class: String,
    pub site_x_km: f64,
    pub site_y_km: f64,
    /// Road node crews travel to for repairs (repairable branches only).
    pub road_node: String,
}

#[derive(Debug, Clone)]
pub struct Switch {
    pub id: String,
    pub branch: usize,
    pub normally_open: bool,
}

#[derive(Debug, Clone)]
pub struct Depot {
    pub id: String,
    pub road_node: String,
}

/// Static crew profile. Mutable per-episode status (position, assignment,
/// duty) lives in the environment.
#[derive(Debug, Clone)]
pub struct Crew {
    pub id: usize,
    pub home_depot: usize,
    pub speed_kmh: f64,
    /// Component classes this crew can repair; `None` means all.
    pub skills: Option<Vec<String>>,
    /// First on-duty instant (h); shifts repeat every 24 h.
    pub shift_start_h: f64,
    pub shift_len_h: f64,
    pub break_len_h: f64,
}

impl Crew {
    pub fn can_service(&self, class: &str) -> bool {
        match &self.skills {
            None => true,
            Some(list) => list.iter().any(|s| s == class),
        }
    }

    /// On-duty test ignoring the mid-shift break.
    pub fn on_shift(&self, t: f64) -> bool {
        let local = (t - self.shift_start_h).rem_euclid(24.0);
        t >= self.shift_start_h && local < self.shift_len_h
    }

    /// Hours of working time left in the current shift (0 when off duty),
    /// accounting for the unconsumed part of the mid-shift break.
    pub fn remaining_shift_h(&self, t: f64) -> f64 {
        if !self.on_shift(t) {
            return 0.0;
        }
        let local = (t - self.shift_start_h).rem_euclid(24.0);
        let shift_end = self.shift_len_h;
        let break_start = self.shift_len_h / 2.0;
        let break_left = if local < break_start {
            self.break_len_h
        } else {
            (break_start + self.break_len_h - local).max(0.0)
        };
        (shift_end - local - break_left).max(0.0)
    }

    /// Next duty boundary strictly after `t`: shift start, break start,
    /// break end, or shift end.
    pub fn next_duty_change(&self, t: f64) -> f64 {
        if t < self.shift_start_h {
            return self.shift_start_h;
        }
        let local = (t - self.shift_start_h).rem_euclid(24.0);
        let cycle0 = t - local;
        let break_start = self.shift_len_h / 2.0;
        let break_end = break_start + self.break_len_h;
        for bound in [break_start, break_end, self.shift_len_h, 24.0] {
            if local < bound {
                return cycle0 + bound;
            }
        }
        cycle0 + 24.0
    }

    /// True when `t` falls inside the mid-shift break.
    pub fn on_break(&self, t: f64) -> bool {
        if !self.on_shift(t) {
            return false;
        }
        let local = (t - self.shift_start_h).rem_euclid(24.0);
        let break_start = self.shift_len_h / 2.0;
        local >= break_start && local < break_start + self.break_len_h
    }
}

/// Round-robin crew pool over the feeder's depots: common speed, all
/// skills, day/night staggered 12-h shifts with a half-hour break.
pub fn default_crews(feeder: &FeederModel, count: usize, speed_kmh: f64) -> Vec<Crew> {
    (0..count)
        .map(|i| Crew {
            id: i,
            home_depot: i % feeder.depots.len(),
            speed_kmh,
            skills: None,
            shift_start_h: if i % 2 == 0 { 0.0 } else { 12.0 },
            shift_len_h: 12.0,
            break_len_h: 0.5,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FeederModel {
    pub name: String,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub switches: Vec<Switch>,
    pub depots: Vec<Depot>,
    pub root: usize,
    bus_index: BTreeMap<String, usize>,
    branch_index: BTreeMap<String, usize>,
    /// switch index per branch, if any
    switch_on_branch: Vec<Option<usize>>,
    /// adjacency: bus -> [(branch, other bus)]
    adj: Vec<Vec<(usize, usize)>>,
}

impl FeederModel {
    pub fn bus_idx(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    pub fn branch_idx(&self, id: &str) -> Option<usize> {
        self.branch_index.get(id).copied()
    }

    pub fn switch_on_branch(&self, branch: usize) -> Option<usize> {
        self.switch_on_branch[branch]
    }

    pub fn total_load_kw(&self) -> f64 {
        self.buses.iter().map(|b| b.load_kw).sum()
    }

    /// Normal switch states: closed unless normally open.
    pub fn normal_switch_states(&self) -> Vec<bool> {
        self.switches.iter().map(|s| !s.normally_open).collect()
    }

    /// One asset site per repairable branch, in branch order.
    pub fn asset_sites(&self) -> Vec<AssetSite> {
        self.branches
            .iter()
            .filter(|b| b.repairable)
            .map(|b| AssetSite {
                id: b.id.clone(),
                x_km: b.site_x_km,
                y_km: b.site_y_km,
                component_class: b.class.clone(),
                branch_id: b.id.clone(),
            })
            .collect()
    }

    /// Stable fingerprint used to match scenarios to feeders.
    pub fn fingerprint(&self) -> String {
        format!(
            "{}:{}b:{}br:{}d",
            self.name,
            self.buses.len(),
            self.branches.len(),
            self.depots.len()
        )
    }

    fn build_indexes(&mut self) {
        self.bus_index = self
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        self.branch_index = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        self.switch_on_branch = vec![None; self.branches.len()];
        for (i, sw) in self.switches.iter().enumerate() {
            self.switch_on_branch[sw.branch] = Some(i);
        }
        self.adj = vec![Vec::new(); self.buses.len()];
        for (i, br) in self.branches.iter().enumerate() {
            self.adj[br.from].push((i, br.to));
            self.adj[br.to].push((i, br.from));
        }
        for list in &mut self.adj {
            list.sort_by_key(|(b, _)| *b);
        }
    }

    /// Structural invariants: unique ids, positive capacities, and
    /// radiality (the normally-closed subgraph is a spanning tree).
    pub fn validate(&self) -> Result<()> {
        if self.buses.is_empty() {
            return Err(Error::Validation("feeder has no buses".into()));
        }
        if self.depots.is_empty() {
            return Err(Error::Validation("feeder has no depots".into()));
        }
        for br in &self.branches {
            if br.capacity_kw <= 0.0 {
                return Err(Error::Validation(format!(
                    "branch {} capacity must be > 0",
                    br.id
                )));
            }
        }
        for bus in &self.buses {
            if bus.load_kw < 0.0 {
                return Err(Error::Validation(format!(
                    "bus {} load must be >= 0",
                    bus.id
                )));
            }
        }
        let no_damage = vec![false; self.branches.len()];
        let normal = self.normal_switch_states();
        let closed_edges = (0..self.branches.len())
            .filter(|&b| self.branch_conducts(b, &no_damage, &normal))
            .count();
        if closed_edges != self.buses.len() - 1 {
            return Err(Error::Validation(format!(
                "radiality: {} closed branches for {} buses (tree needs {})",
                closed_edges,
                self.buses.len(),
                self.buses.len() - 1
            )));
        }
        let energized = energized_set(self, &no_damage, &normal);
        if energized.iter().any(|e| !e) {
            let dark: Vec<&str> = self
                .buses
                .iter()
                .zip(&energized)
                .filter(|(_, e)| !**e)
                .map(|(b, _)| b.id.as_str())
                .collect();
            return Err(Error::Validation(format!(
                "radiality: buses unreachable from root in normal state: {dark:?}"
            )));
        }
        // Edge count == n-1 and full reachability together imply a tree.
        Ok(())
    }

    /// All branch/depot road-node references must exist in `roads`.
    pub fn validate_road_refs(&self, roads: &RoadGraph) -> Result<()> {
        for br in self.branches.iter().filter(|b| b.repairable) {
            if roads.node_idx(&br.road_node).is_none() {
                return Err(Error::Validation(format!(
                    "branch {} references unknown road node {}",
                    br.id, br.road_node
                )));
            }
        }
        for d in &self.depots {
            if roads.node_idx(&d.road_node).is_none() {
                return Err(Error::Validation(format!(
                    "depot {} references unknown road node {}",
                    d.id, d.road_node
                )));
            }
        }
        Ok(())
    }

    pub fn branch_conducts(&self, branch: usize, damaged: &[bool], switch_closed: &[bool]) -> bool {
        if damaged[branch] {
            return false;
        }
        match self.switch_on_branch[branch] {
            Some(sw) => switch_closed[sw],
            None => true,
        }
    }
}

/// Buses connected to the substation through closed, undamaged branches.
pub fn energized_set(feeder: &FeederModel, damaged: &[bool], switch_closed: &[bool]) -> Vec<bool> {
    assert_eq!(damaged.len(), feeder.branches.len());
    assert_eq!(switch_closed.len(), feeder.switches.len());
    let mut seen = vec![false; feeder.buses.len()];
    let mut stack = vec![feeder.root];
    seen[feeder.root] = true;
    while let Some(bus) = stack.pop() {
        for &(branch, other) in &feeder.adj[bus] {
            if !seen[other] && feeder.branch_conducts(branch, damaged, switch_closed) {
                seen[other] = true;
                stack.push(other);
            }
        }
    }
    seen
}

/// Total and critical unserved load over de-energized buses, in kW.
pub fn unserved_power(feeder: &FeederModel, energized: &[bool]) -> (f64, f64) {
    let mut total = 0.0;
    let mut critical = 0.0;
    for (bus, on) in feeder.buses.iter().zip(energized) {
        if !on {
            total += bus.load_kw;
            if bus.critical {
                critical += bus.load_kw;
            }
        }
    }
    (total, critical)
}

/// True when the conductive subgraph restricted to energized buses is
/// acyclic (radial operation).
pub fn is_radial(feeder: &FeederModel, damaged: &[bool], switch_closed: &[bool]) -> bool {
    let energized = energized_set(feeder, damaged, switch_closed);
    let nodes = energized.iter().filter(|e| **e).count();
    let edges = (0..feeder.branches.len())
        .filter(|&b| {
            feeder.branch_conducts(b, damaged, switch_closed)
                && energized[feeder.branches[b].from]
                && energized[feeder.branches[b].to]
        })
        .count();
    edges + 1 == nodes
}

/// Branch ids whose downstream energized load exceeds capacity, assuming
/// radial operation. Violations are data, not errors.
pub fn capacity_screen(
    feeder: &FeederModel,
    damaged: &[bool],
    switch_closed: &[bool],
) -> Vec<usize> {
    let energized = energized_set(feeder, damaged, switch_closed);
    // Parent pointers by BFS from the root over conductive branches.
    let mut parent_branch = vec![usize::MAX; feeder.buses.len()];
    let mut order = Vec::with_capacity(feeder.buses.len());
    let mut seen = vec![false; feeder.buses.len()];
    let mut queue = std::collections::VecDeque::from([feeder.root]);
    seen[feeder.root] = true;
    while let Some(bus) = queue.pop_front() {
        order.push(bus);
        for &(branch, other) in &feeder.adj[bus] {
            if !seen[other] && feeder.branch_conducts(branch, damaged, switch_closed) {
                seen[other] = true;
                parent_branch[other] = branch;
                queue.push_back(other);
            }
        }
    }
    // Subtree load sums in reverse BFS order.
    let mut subtree = vec![0.0; feeder.buses.len()];
    for &bus in order.iter().rev() {
        subtree[bus] += feeder.buses[bus].load_kw;
        let pb = parent_branch[bus];
        if pb != usize::MAX {
            let br = &feeder.branches[pb];
            let parent = if br.from == bus { br.to } else { br.from };
            subtree[parent] += subtree[bus];
        }
    }
    let mut violations = Vec::new();
    for (bus, &pb) in parent_branch.iter().enumerate() {
        if pb != usize::MAX && energized[bus] && subtree[bus] > feeder.branches[pb].capacity_kw {
            violations.push(pb);
        }
    }
    violations.sort_unstable();
    violations.dedup();
    violations
}

// ---------------------------------------------------------------------------
// Road graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RoadNode {
    pub id: String,
    pub x_km: f64,
    pub y_km: f64,
}

#[derive(Debug, Clone)]
pub struct RoadSegment {
    pub id: String,
    pub a: usize,
    pub b: usize,
    pub length_km: f64,
    pub closed: bool,
}

#[derive(Debug, Clone)]
pub struct RoadGraph {
    pub nodes: Vec<RoadNode>,
    pub segments: Vec<RoadSegment>,
    node_index: BTreeMap<String, usize>,
    segment_index: BTreeMap<String, usize>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl RoadGraph {
    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn segment_idx(&self, id: &str) -> Option<usize> {
        self.segment_index.get(id).copied()
    }

    fn build_indexes(&mut self) {
        self.node_index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        self.segment_index = self
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        self.adj = vec![Vec::new(); self.nodes.len()];
        for (i, seg) in self.segments.iter().enumerate() {
            self.adj[seg.a].push((i, seg.b));
            self.adj[seg.b].push((i, seg.a));
        }
        for list in &mut self.adj {
            list.sort_by_key(|(s, _)| *s);
        }
    }

    /// Copy with the named segments marked closed. Unknown ids error.
    pub fn with_closures(&self, closed_ids: &[String]) -> Result<RoadGraph> {
        let mut g = self.clone();
        for id in closed_ids {
            let idx = g.segment_idx(id).ok_or_else(|| {
                Error::Validation(format!("road closure references unknown segment {id}"))
            })?;
            g.segments[idx].closed = true;
        }
        Ok(g)
    }

    /// Single-source shortest distances over open segments (km);
    /// unreachable nodes get infinity. Ties resolve by ascending node id.
    pub fn open_distances_from(&self, from: usize) -> Vec<f64> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        #[derive(PartialEq)]
        struct Entry(f64, usize);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.0
                    .partial_cmp(&other.0)
                    .unwrap()
                    .then(self.1.cmp(&other.1))
            }
        }
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        dist[from] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(Entry(0.0, from)));
        while let Some(Reverse(Entry(d, node))) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(seg, other) in &self.adj[node] {
                let s = &self.segments[seg];
                if s.closed {
                    continue;
                }
                let nd = d + s.length_km;
                if nd < dist[other] {
                    dist[other] = nd;
                    heap.push(Reverse(Entry(nd, other)));
                }
            }
        }
        dist
    }

    /// Shortest open route with the node sequence, or None when
    /// unreachable. Ties prefer the smaller predecessor node.
    pub fn open_route(&self, from: usize, to: usize) -> Option<(f64, Vec<usize>)> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        #[derive(PartialEq)]
        struct Entry(f64, usize);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.0
                    .partial_cmp(&other.0)
                    .unwrap()
                    .then(self.1.cmp(&other.1))
            }
        }
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut prev = vec![usize::MAX; self.nodes.len()];
        dist[from] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(Entry(0.0, from)));
        while let Some(Reverse(Entry(d, node))) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            if node == to {
                break;
            }
            for &(seg, other) in &self.adj[node] {
                let s = &self.segments[seg];
                if s.closed {
                    continue;
                }
                let nd = d + s.length_km;
                if nd < dist[other] || (nd == dist[other] && node < prev[other]) {
                    dist[other] = nd;
                    prev[other] = node;
                    heap.push(Reverse(Entry(nd, other)));
                }
            }
        }
        if !dist[to].is_finite() {
            return None;
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        Some((dist[to], path))
    }

    /// Shortest open segment directly connecting two nodes.
    pub fn segment_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adj[a]
            .iter()
            .filter(|(seg, other)| *other == b && !self.segments[*seg].closed)
            .min_by(|(s1, _), (s2, _)| {
                self.segments[*s1]
                    .length_km
                    .total_cmp(&self.segments[*s2].length_km)
                    .then(s1.cmp(s2))
            })
            .map(|(seg, _)| *seg)
    }

    /// Shortest open-road distance between two named nodes, or None when no
    /// open route exists.
    pub fn shortest_open_path(&self, from: &str, to: &str) -> Result<Option<f64>> {
        let f = self
            .node_idx(from)
            .ok_or_else(|| Error::ParamDomain(format!("unknown road node {from}")))?;
        let t = self
            .node_idx(to)
            .ok_or_else(|| Error::ParamDomain(format!("unknown road node {to}")))?;
        let d = self.open_distances_from(f)[t];
        Ok(if d.is_finite() { Some(d) } else { None })
    }
}

/// Door-to-door travel time (h): congestion factor times distance over
/// crew speed. Infinite distance stays infinite (mask it).
pub fn travel_time(distance_km: f64, speed_kmh: f64, rho: f64) -> f64 {
    debug_assert!(speed_kmh > 0.0);
    rho * distance_km / speed_kmh
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

struct LineReader<'a> {
    path: String,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str, path: &str) -> Self {
        LineReader {
            path: path.to_string(),
            lines: text.lines().enumerate(),
        }
    }

    /// Next significant line (skipping blanks/comments) with its 1-based number.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.lines.by_ref() {
            let line = raw.trim();
            if line.is_empty() || (line.starts_with('#') && i > 0) {
                continue;
            }
            return Some((i + 1, line));
        }
        None
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }
}

fn parse_f64(r: &LineReader, line: usize, tok: &str, what: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| r.err(line, format!("bad {what}: {tok:?}")))
}

fn parse_flag(r: &LineReader, line: usize, tok: &str, what: &str) -> Result<bool> {
    match tok {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(r.err(line, format!("bad {what} (expect 0/1): {tok:?}"))),
    }
}

/// Parses the feeder topology format. The expected layout is a header line,
/// `name`/`root` keys, then `[buses]`, `[branches]`, `[switches]`,
/// `[depots]` sections of whitespace-separated records.
pub fn parse_feeder(text: &str, path: &str) -> Result<FeederModel> {
    let mut r = LineReader::new(text, path);
    let (ln, header) = r
        .next_line()
        .ok_or_else(|| r.err(0, "empty feeder file"))?;
    if header != FEEDER_HEADER {
        return Err(r.err(ln, format!("expected header {FEEDER_HEADER:?}")));
    }
    let mut name = String::new();
    let mut root_id = String::new();
    let mut buses: Vec<Bus> = Vec::new();
    let mut raw_branches: Vec<(usize, Vec<String>)> = Vec::new();
    let mut raw_switches: Vec<(usize, Vec<String>)> = Vec::new();
    let mut depots: Vec<Depot> = Vec::new();
    let mut section = "";
    while let Some((ln, line)) = r.next_line() {
        if let Some(sec) = line.strip_prefix('[') {
            section = match sec.strip_suffix(']') {
                Some("buses") => "buses",
                Some("branches") => "branches",
                Some("switches") => "switches",
                Some("depots") => "depots",
                _ => return Err(r.err(ln, format!("unknown section {line:?}"))),
            };
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match section {
            "" => match toks.as_slice() {
                ["name", v] => name = v.to_string(),
                ["root", v] => root_id = v.to_string(),
                _ => return Err(r.err(ln, format!("expected name/root before sections: {line:?}"))),
            },
            "buses" => {
                if toks.len() != 3 {
                    return Err(r.err(ln, "bus record needs: id load_kw critical"));
                }
                buses.push(Bus {
                    id: toks[0].to_string(),
                    load_kw: parse_f64(&r, ln, toks[1], "load_kw")?,
                    critical: parse_flag(&r, ln, toks[2], "critical flag")?,
                });
            }
            "branches" => {
                if toks.len() != 9 {
                    return Err(r.err(
                        ln,
                        "branch record needs: id from to capacity_kw repairable class x y road_node",
                    ));
                }
                raw_branches.push((ln, toks.iter().map(|t| t.to_string()).collect()));
            }
            "switches" => {
                if toks.len() != 3 {
                    return Err(r.err(ln, "switch record needs: id branch normally_open"));
                }
                raw_switches.push((ln, toks.iter().map(|t| t.to_string()).collect()));
            }
            "depots" => {
                if toks.len() != 2 {
                    return Err(r.err(ln, "depot record needs: id road_node"));
                }
                depots.push(Depot {
                    id: toks[0].to_string(),
                    road_node: toks[1].to_string(),
                });
            }
            _ => unreachable!(),
        }
    }
    let bus_index: BTreeMap<String, usize> = buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.clone(), i))
        .collect();
    if bus_index.len() != buses.len() {
        return Err(Error::Validation(format!("{path}: duplicate bus ids")));
    }
    let mut branches = Vec::with_capacity(raw_branches.len());
    for (ln, toks) in raw_branches {
        let from = *bus_index
            .get(&toks[1])
            .ok_or_else(|| r.err(ln, format!("unknown bus {:?}", toks[1])))?;
        let to = *bus_index
            .get(&toks[2])
            .ok_or_else(|| r.err(ln, format!("unknown bus {:?}", toks[2])))?;
        let repairable = parse_flag(&r, ln, &toks[4], "repairable flag")?;
        if repairable && (toks[5] == "-" || toks[8] == "-") {
            return Err(r.err(ln, "repairable branch needs class, coordinates, road node"));
        }
        branches.push(Branch {
            id: toks[0].clone(),
            from,
            to,
            capacity_kw: parse_f64(&r, ln, &toks[3], "capacity_kw")?,
            repairable,
            class: toks[5].clone(),
            site_x_km: if toks[6] == "-" {
                0.0
            } else {
                parse_f64(&r, ln, &toks[6], "site x")?
            },
            site_y_km: if toks[7] == "-" {
                0.0
            } else {
                parse_f64(&r, ln, &toks[7], "site y")?
            },
            road_node: toks[8].clone(),
        });
    }
    let branch_index: BTreeMap<String, usize> = branches
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.clone(), i))
        .collect();
    if branch_index.len() != branches.len() {
        return Err(Error::Validation(format!("{path}: duplicate branch ids")));
    }
    let mut switches = Vec::with_capacity(raw_switches.len());
    for (ln, toks) in raw_switches {
        let branch = *branch_index
            .get(&toks[1])
            .ok_or_else(|| r.err(ln, format!("unknown branch {:?}", toks[1])))?;
        switches.push(Switch {
            id: toks[0].clone(),
            branch,
            normally_open: parse_flag(&r, ln, &toks[2], "normally_open flag")?,
        });
    }
    let root = *bus_index
        .get(&root_id)
        .ok_or_else(|| Error::Validation(format!("{path}: root bus {root_id:?} not found")))?;
    let mut model = FeederModel {
        name,
        buses,
        branches,
        switches,
        depots,
        root,
        bus_index: BTreeMap::new(),
        branch_index: BTreeMap::new(),
        switch_on_branch: Vec::new(),
        adj: Vec::new(),
    };
    model.build_indexes();
    model.validate()?;
    Ok(model)
}

pub fn parse_roads(text: &str, path: &str) -> Result<RoadGraph> {
    let mut r = LineReader::new(text, path);
    let (ln, header) = r.next_line().ok_or_else(|| r.err(0, "empty road file"))?;
    if header != ROADS_HEADER {
        return Err(r.err(ln, format!("expected header {ROADS_HEADER:?}")));
    }
    let mut nodes: Vec<RoadNode> = Vec::new();
    let mut raw_segments: Vec<(usize, Vec<String>)> = Vec::new();
    let mut section = "";
    while let Some((ln, line)) = r.next_line() {
        if line.starts_with('[') {
            section = match line {
                "[nodes]" => "nodes",
                "[segments]" => "segments",
                _ => return Err(r.err(ln, format!("unknown section {line:?}"))),
            };
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match section {
            "nodes" => {
                if toks.len() != 3 {
                    return Err(r.err(ln, "node record needs: id x_km y_km"));
                }
                nodes.push(RoadNode {
                    id: toks[0].to_string(),
                    x_km: parse_f64(&r, ln, toks[1], "x_km")?,
                    y_km: parse_f64(&r, ln, toks[2], "y_km")?,
                });
            }
            "segments" => {
                if toks.len() != 4 {
                    return Err(r.err(ln, "segment record needs: id a b length_km"));
                }
                raw_segments.push((ln, toks.iter().map(|t| t.to_string()).collect()));
            }
            _ => return Err(r.err(ln, "record outside any section")),
        }
    }
    let node_index: BTreeMap<String, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect();
    if node_index.len() != nodes.len() {
        return Err(Error::Validation(format!("{path}: duplicate node ids")));
    }
    let mut segments = Vec::with_capacity(raw_segments.len());
    for (ln, toks) in raw_segments {
        let a = *node_index
            .get(&toks[1])
            .ok_or_else(|| r.err(ln, format!("unknown node {:?}", toks[1])))?;
        let b = *node_index
            .get(&toks[2])
            .ok_or_else(|| r.err(ln, format!("unknown node {:?}", toks[2])))?;
        let length_km = parse_f64(&r, ln, &toks[3], "length_km")?;
        if length_km <= 0.0 {
            return Err(r.err(ln, "segment length must be > 0"));
        }
        segments.push(RoadSegment {
            id: toks[0].clone(),
            a,
            b,
            length_km,
            closed: false,
        });
    }
    let mut g = RoadGraph {
        nodes,
        segments,
        node_index: BTreeMap::new(),
        segment_index: BTreeMap::new(),
        adj: Vec::new(),
    };
    g.build_indexes();
    Ok(g)
}

pub fn load_feeder(path: &Path) -> Result<FeederModel> {
    let text = std::fs::read_to_string(path)?;
    parse_feeder(&text, &path.display().to_string())
}

pub fn load_roads(path: &Path) -> Result<RoadGraph> {
    let text = std::fs::read_to_string(path)?;
    parse_roads(&text, &path.display().to_string())
}

const FEEDER_13: &str = include_str!("../../data/feeder13.grid");
const ROADS_13: &str = include_str!("../../data/roads13.road");
const FEEDER_123: &str = include_str!("../../data/feeder123.grid");
const ROADS_123: &str = include_str!("../../data/roads123.road");

/// Loads a bundled instance by alias ("13bus"/"123bus") or a `.grid` path;
/// the road graph comes from the matching bundled file or `<stem>.road`.
pub fn load_network(spec: &str) -> Result<(FeederModel, RoadGraph)> {
    let (feeder, roads) = match spec {
        "13bus" => (
            parse_feeder(FEEDER_13, "bundled:feeder13.grid")?,
            parse_roads(ROADS_13, "bundled:roads13.road")?,
        ),
        "123bus" => (
            parse_feeder(FEEDER_123, "bundled:feeder123.grid")?,
            parse_roads(ROADS_123, "bundled:roads123.road")?,
        ),
        path => {
            let grid = Path::new(path);
            let road = grid.with_extension("road");
            (load_feeder(grid)?, load_roads(&road)?)
        }
    };
    feeder.validate_road_refs(&roads)?;
    Ok((feeder, roads))
}

/// Renders a feeder back to the file format (used by tests and tooling).
pub fn render_feeder(f: &FeederModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{FEEDER_HEADER}");
    let _ = writeln!(s, "name {}", f.name);
    let _ = writeln!(s, "root {}", f.buses[f.root].id);
    let _ = writeln!(s, "[buses]");
    for b in &f.buses {
        let _ = writeln!(s, "{} {} {}", b.id, b.load_kw, b.critical as u8);
    }
    let _ = writeln!(s, "[branches]");
    for b in &f.branches {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            b.id,
            f.buses[b.from].id,
            f.buses[b.to].id,
            b.capacity_kw,
            b.repairable as u8,
            if b.repairable { &b.class } else { "-" },
            if b.repairable {
                b.site_x_km.to_string()
            } else {
                "-".into()
            },
            if b.repairable {
                b.site_y_km.to_string()
            } else {
                "-".into()
            },
            if b.repairable { &b.road_node } else { "-" },
        );
    }
    let _ = writeln!(s, "[switches]");
    for sw in &f.switches {
        let _ = writeln!(
            s,
            "{} {} {}",
            sw.id,
            f.branches[sw.branch].id,
            sw.normally_open as u8
        );
    }
    let _ = writeln!(s, "[depots]");
    for d in &f.depots {
        let _ = writeln!(s, "{} {}", d.id, d.road_node);
    }
    s
}

#[cfg(test)]
mod tests;
