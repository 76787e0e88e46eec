//! Petri nets with token-game semantics, structural validators (workflow,
//! free-choice, bounded soundness), an alpha-style lifecycle miner and replay
//! fitness. Nets and markings are immutable values; all operations are pure.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::artifact::LifecycleLog;
use crate::error::{Error, Result};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub name: String,
    /// display label; defaults to the name
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// false marks a silent (τ) transition
    #[serde(default = "default_true")]
    pub visible: bool,
}

impl Transition {
    pub fn visible(name: impl Into<String>) -> Self {
        Transition {
            name: name.into(),
            label: None,
            visible: true,
        }
    }

    pub fn silent(name: impl Into<String>) -> Self {
        Transition {
            name: name.into(),
            label: None,
            visible: false,
        }
    }

    pub fn display_label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PetriNet {
    pub places: Vec<String>,
    pub transitions: Vec<Transition>,
    pub arcs: Vec<Arc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(rename = "final", default, skip_serializing_if = "Option::is_none")]
    pub final_place: Option<String>,
}

/// A multiset of tokens over places; zero counts are not stored, so equal
/// markings compare equal structurally.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Marking(pub BTreeMap<String, u32>);

impl Marking {
    pub fn single(place: impl Into<String>) -> Self {
        Marking(BTreeMap::from([(place.into(), 1)]))
    }

    pub fn count(&self, place: &str) -> u32 {
        self.0.get(place).copied().unwrap_or(0)
    }

    fn add(&mut self, place: &str, n: u32) {
        *self.0.entry(place.to_string()).or_insert(0) += n;
    }

    fn sub(&mut self, place: &str, n: u32) {
        let c = self.0.get_mut(place).expect("token underflow");
        *c -= n;
        if *c == 0 {
            self.0.remove(place);
        }
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }
}

/// Precomputed adjacency for a net.
pub struct NetIndex<'a> {
    pub pre_t: BTreeMap<&'a str, Vec<&'a str>>,
    pub post_t: BTreeMap<&'a str, Vec<&'a str>>,
    pub pre_p: BTreeMap<&'a str, Vec<&'a str>>,
    pub post_p: BTreeMap<&'a str, Vec<&'a str>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub ok: bool,
    pub witnesses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Soundness {
    Sound,
    Unsound(String),
    Inconclusive,
}

impl PetriNet {
    /// Structural validation: unique names per node kind, no shared
    /// place/transition names, bipartite arcs over known nodes.
    pub fn validate(&self) -> Result<()> {
        let places: HashSet<&str> = self.places.iter().map(|s| s.as_str()).collect();
        if places.len() != self.places.len() {
            return Err(Error::InvalidNet("duplicate place name".into()));
        }
        let transitions: HashSet<&str> = self.transitions.iter().map(|t| t.name.as_str()).collect();
        if transitions.len() != self.transitions.len() {
            return Err(Error::InvalidNet("duplicate transition name".into()));
        }
        if let Some(shared) = places.intersection(&transitions).next() {
            return Err(Error::InvalidNet(format!(
                "name {shared} used for both a place and a transition"
            )));
        }
        for arc in &self.arcs {
            let p_to_t = places.contains(arc.from.as_str()) && transitions.contains(arc.to.as_str());
            let t_to_p = transitions.contains(arc.from.as_str()) && places.contains(arc.to.as_str());
            if !p_to_t && !t_to_p {
                return Err(Error::InvalidNet(format!(
                    "arc {} -> {} is not bipartite over known nodes",
                    arc.from, arc.to
                )));
            }
        }
        for designated in [&self.initial, &self.final_place].into_iter().flatten() {
            if !places.contains(designated.as_str()) {
                return Err(Error::InvalidNet(format!(
                    "designated place {designated} does not exist"
                )));
            }
        }
        Ok(())
    }

    pub fn index(&self) -> NetIndex<'_> {
        let mut idx = NetIndex {
            pre_t: self.transitions.iter().map(|t| (t.name.as_str(), vec![])).collect(),
            post_t: self.transitions.iter().map(|t| (t.name.as_str(), vec![])).collect(),
            pre_p: self.places.iter().map(|p| (p.as_str(), vec![])).collect(),
            post_p: self.places.iter().map(|p| (p.as_str(), vec![])).collect(),
        };
        for arc in &self.arcs {
            if idx.pre_t.contains_key(arc.to.as_str()) {
                idx.pre_t.get_mut(arc.to.as_str()).unwrap().push(arc.from.as_str());
                idx.post_p.get_mut(arc.from.as_str()).unwrap().push(arc.to.as_str());
            } else {
                idx.post_t.get_mut(arc.from.as_str()).unwrap().push(arc.to.as_str());
                idx.pre_p.get_mut(arc.to.as_str()).unwrap().push(arc.from.as_str());
            }
        }
        idx
    }

    pub fn transition(&self, name: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.name == name)
    }

    pub fn initial_marking(&self) -> Result<Marking> {
        self.initial
            .as_ref()
            .map(|p| Marking::single(p.clone()))
            .ok_or_else(|| Error::InvalidNet("no initial place designated".into()))
    }

    pub fn final_marking(&self) -> Result<Marking> {
        self.final_place
            .as_ref()
            .map(|p| Marking::single(p.clone()))
            .ok_or_else(|| Error::InvalidNet("no final place designated".into()))
    }
}

/// Transitions whose every pre-place holds at least one token. A transition
/// with no pre-places is always enabled.
pub fn enabled_transitions<'a>(net: &'a PetriNet, m: &Marking) -> Vec<&'a str> {
    let idx = net.index();
    net.transitions
        .iter()
        .filter(|t| idx.pre_t[t.name.as_str()].iter().all(|p| m.count(p) >= 1))
        .map(|t| t.name.as_str())
        .collect()
}

fn fire_indexed(idx: &NetIndex<'_>, m: &Marking, t: &str) -> Result<Marking> {
    let pre = idx
        .pre_t
        .get(t)
        .ok_or_else(|| Error::InvalidNet(format!("unknown transition {t}")))?;
    if pre.iter().any(|p| m.count(p) < 1) {
        return Err(Error::NotEnabled(t.to_string()));
    }
    let mut out = m.clone();
    for p in pre {
        out.sub(p, 1);
    }
    for p in &idx.post_t[t] {
        out.add(p, 1);
    }
    Ok(out)
}

/// Consume one token from each pre-place of `t`, produce one in each
/// post-place.
pub fn fire(net: &PetriNet, m: &Marking, t: &str) -> Result<Marking> {
    fire_indexed(&net.index(), m, t)
}

/// Reverse update of `fire`: restores the marking the firing started from.
pub fn unfire(net: &PetriNet, m: &Marking, t: &str) -> Result<Marking> {
    let idx = net.index();
    let post = idx
        .post_t
        .get(t)
        .ok_or_else(|| Error::InvalidNet(format!("unknown transition {t}")))?;
    if post.iter().any(|p| m.count(p) < 1) {
        return Err(Error::NotEnabled(t.to_string()));
    }
    let mut out = m.clone();
    for p in post {
        out.sub(p, 1);
    }
    for p in &idx.pre_t[t] {
        out.add(p, 1);
    }
    Ok(out)
}

/// Workflow-net check: a unique source place, a unique sink place, and every
/// node on a path from source to sink. Declared initial/final designations
/// must match the structure when present.
pub fn is_workflow_net(net: &PetriNet) -> Verdict {
    let idx = net.index();
    let mut witnesses = Vec::new();
    let sources: Vec<&str> = net
        .places
        .iter()
        .map(|p| p.as_str())
        .filter(|p| idx.pre_p[p].is_empty())
        .collect();
    let sinks: Vec<&str> = net
        .places
        .iter()
        .map(|p| p.as_str())
        .filter(|p| idx.post_p[p].is_empty())
        .collect();
    if sources.len() != 1 {
        witnesses.push(format!("source places: {{{}}}", sources.join(", ")));
    }
    if sinks.len() != 1 {
        witnesses.push(format!("sink places: {{{}}}", sinks.join(", ")));
    }
    if let (Some(declared), [actual]) = (&net.initial, sources.as_slice()) {
        if declared != actual {
            witnesses.push(format!("declared initial {declared} is not the source {actual}"));
        }
    }
    if let (Some(declared), [actual]) = (&net.final_place, sinks.as_slice()) {
        if declared != actual {
            witnesses.push(format!("declared final {declared} is not the sink {actual}"));
        }
    }
    if let ([source], [sink]) = (sources.as_slice(), sinks.as_slice()) {
        // graph reachability over arcs, ignoring tokens
        let forward = graph_reach(source, |n| {
            idx.post_p
                .get(n)
                .or_else(|| idx.post_t.get(n))
                .cloned()
                .unwrap_or_default()
        });
        let backward = graph_reach(sink, |n| {
            idx.pre_p
                .get(n)
                .or_else(|| idx.pre_t.get(n))
                .cloned()
                .unwrap_or_default()
        });
        for node in net
            .places
            .iter()
            .map(|p| p.as_str())
            .chain(net.transitions.iter().map(|t| t.name.as_str()))
        {
            if !forward.contains(node) || !backward.contains(node) {
                witnesses.push(format!("node {node} is not on a path from {source} to {sink}"));
            }
        }
    }
    Verdict {
        ok: witnesses.is_empty(),
        witnesses,
    }
}

fn graph_reach<'a>(start: &'a str, next: impl Fn(&'a str) -> Vec<&'a str>) -> HashSet<&'a str> {
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        for n in next(node) {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Free-choice check: whenever a place has several consumers, it is the only
/// pre-place of each of them. Offending (place, transition) pairs are
/// reported.
pub fn is_free_choice(net: &PetriNet) -> Verdict {
    let idx = net.index();
    let mut witnesses = Vec::new();
    for place in &net.places {
        let consumers = &idx.post_p[place.as_str()];
        if consumers.len() > 1 {
            for t in consumers {
                if idx.pre_t[t].as_slice() != [place.as_str()] {
                    witnesses.push(format!("({place}, {t})"));
                }
            }
        }
    }
    Verdict {
        ok: witnesses.is_empty(),
        witnesses,
    }
}

struct ReachabilityGraph {
    markings: Vec<Marking>,
    /// edges (from state, transition index, to state)
    edges: Vec<(usize, usize, usize)>,
    complete: bool,
}

fn reachability(net: &PetriNet, from: &Marking, state_cap: usize) -> ReachabilityGraph {
    let idx = net.index();
    let mut markings = vec![from.clone()];
    let mut seen: BTreeMap<Marking, usize> = BTreeMap::from([(from.clone(), 0)]);
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    let mut complete = true;
    'explore: while let Some(at) = queue.pop_front() {
        for (ti, t) in net.transitions.iter().enumerate() {
            let Ok(next) = fire_indexed(&idx, &markings[at], &t.name) else {
                continue;
            };
            let to = match seen.get(&next) {
                Some(&i) => i,
                None => {
                    if markings.len() >= state_cap {
                        complete = false;
                        break 'explore;
                    }
                    let i = markings.len();
                    markings.push(next.clone());
                    seen.insert(next, i);
                    queue.push_back(i);
                    i
                }
            };
            edges.push((at, ti, to));
        }
    }
    ReachabilityGraph {
        markings,
        edges,
        complete,
    }
}

/// Bounded soundness: exhaustive reachability up to `state_cap` states, then
/// option-to-complete, proper completion and absence of dead transitions.
pub fn is_sound(net: &PetriNet, state_cap: usize) -> Result<Soundness> {
    net.validate()?;
    let initial = net.initial_marking()?;
    let final_marking = net.final_marking()?;
    let final_place = net.final_place.as_deref().unwrap();
    let graph = reachability(net, &initial, state_cap);
    if !graph.complete {
        return Ok(Soundness::Inconclusive);
    }
    // proper completion: a token in the final place means exactly the final
    // marking
    for m in &graph.markings {
        if m.count(final_place) >= 1 && *m != final_marking {
            return Ok(Soundness::Unsound(format!(
                "improper completion: reachable marking {m:?} marks {final_place} alongside other tokens"
            )));
        }
    }
    // option to complete: every reachable marking can still reach the final
    // marking
    let Some(final_idx) = graph.markings.iter().position(|m| *m == final_marking) else {
        return Ok(Soundness::Unsound("final marking unreachable".into()));
    };
    let mut co_reachable = vec![false; graph.markings.len()];
    co_reachable[final_idx] = true;
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); graph.markings.len()];
    for &(from, _, to) in &graph.edges {
        reverse[to].push(from);
    }
    let mut queue = VecDeque::from([final_idx]);
    while let Some(at) = queue.pop_front() {
        for &prev in &reverse[at] {
            if !co_reachable[prev] {
                co_reachable[prev] = true;
                queue.push_back(prev);
            }
        }
    }
    if let Some(stuck) = co_reachable.iter().position(|&r| !r) {
        return Ok(Soundness::Unsound(format!(
            "no option to complete from reachable marking {:?}",
            graph.markings[stuck]
        )));
    }
    let fired: HashSet<usize> = graph.edges.iter().map(|&(_, t, _)| t).collect();
    for (ti, t) in net.transitions.iter().enumerate() {
        if !fired.contains(&ti) {
            return Ok(Soundness::Unsound(format!("dead transition {}", t.name)));
        }
    }
    Ok(Soundness::Sound)
}

/// All markings reachable by firing at most `budget` silent transitions.
fn tau_closure(net: &PetriNet, idx: &NetIndex<'_>, states: &BTreeSet<Marking>, budget: usize) -> BTreeSet<Marking> {
    let silent: Vec<&str> = net
        .transitions
        .iter()
        .filter(|t| !t.visible)
        .map(|t| t.name.as_str())
        .collect();
    let mut closure = states.clone();
    let mut frontier: Vec<Marking> = states.iter().cloned().collect();
    for _ in 0..budget {
        let mut next = Vec::new();
        for m in &frontier {
            for t in &silent {
                if let Ok(fired) = fire_indexed(idx, m, t) {
                    if closure.insert(fired.clone()) {
                        next.push(fired);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    closure
}

/// Fraction of traces replayable from the initial to the final marking, with
/// silent transitions fired freely between visible events (τ budget 16 per
/// step).
pub fn replay_fitness(net: &PetriNet, traces: &[Vec<String>]) -> Result<f64> {
    const TAU_BUDGET: usize = 16;
    net.validate()?;
    let initial = net.initial_marking()?;
    let final_marking = net.final_marking()?;
    if traces.is_empty() {
        return Ok(1.0);
    }
    let idx = net.index();
    let mut ok = 0usize;
    for trace in traces {
        let mut states = tau_closure(net, &idx, &BTreeSet::from([initial.clone()]), TAU_BUDGET);
        let mut alive = true;
        for event in trace {
            let mut next = BTreeSet::new();
            for m in &states {
                for t in net.transitions.iter().filter(|t| t.visible && t.name == *event) {
                    if let Ok(fired) = fire_indexed(&idx, m, &t.name) {
                        next.insert(fired);
                    }
                }
            }
            if next.is_empty() {
                alive = false;
                break;
            }
            states = tau_closure(net, &idx, &next, TAU_BUDGET);
        }
        if alive && states.contains(&final_marking) {
            ok += 1;
        }
    }
    Ok(ok as f64 / traces.len() as f64)
}

/// Visible traces accepted by the net (reaching the final marking), up to
/// `max_len` visible events, exploring at most `state_cap` (marking, trace)
/// pairs. `allowed` can veto transitions, e.g. to fix a branch valuation.
pub fn language_filtered(
    net: &PetriNet,
    max_len: usize,
    state_cap: usize,
    allowed: &dyn Fn(&Transition) -> bool,
) -> Result<BTreeSet<Vec<String>>> {
    explore_traces(net, max_len, state_cap, allowed, false)
}

/// Visible traces of every reachable firing sequence (prefix-closed), not
/// just the completing ones.
pub fn prefix_traces_filtered(
    net: &PetriNet,
    max_len: usize,
    state_cap: usize,
    allowed: &dyn Fn(&Transition) -> bool,
) -> Result<BTreeSet<Vec<String>>> {
    explore_traces(net, max_len, state_cap, allowed, true)
}

fn explore_traces(
    net: &PetriNet,
    max_len: usize,
    state_cap: usize,
    allowed: &dyn Fn(&Transition) -> bool,
    all_prefixes: bool,
) -> Result<BTreeSet<Vec<String>>> {
    net.validate()?;
    let initial = net.initial_marking()?;
    let final_marking = net.final_marking()?;
    let idx = net.index();
    let mut out = BTreeSet::new();
    let mut seen: BTreeSet<(Marking, Vec<String>)> = BTreeSet::new();
    let mut queue = VecDeque::from([(initial, Vec::<String>::new())]);
    while let Some((m, trace)) = queue.pop_front() {
        if all_prefixes || m == final_marking {
            out.insert(trace.clone());
        }
        for t in &net.transitions {
            if !allowed(t) {
                continue;
            }
            let Ok(next) = fire_indexed(&idx, &m, &t.name) else {
                continue;
            };
            let mut extended = trace.clone();
            if t.visible {
                if trace.len() >= max_len {
                    continue;
                }
                extended.push(t.name.clone());
            }
            if seen.insert((next.clone(), extended.clone())) {
                if seen.len() > state_cap {
                    return Err(Error::InvalidNet(format!(
                        "language exploration exceeded {state_cap} states"
                    )));
                }
                queue.push_back((next, extended));
            }
        }
    }
    Ok(out)
}

pub fn language(net: &PetriNet, max_len: usize, state_cap: usize) -> Result<BTreeSet<Vec<String>>> {
    language_filtered(net, max_len, state_cap, &|_| true)
}

fn fresh_name(base: &str, taken: &HashSet<&str>) -> String {
    let mut name = base.to_string();
    while taken.contains(name.as_str()) {
        name.push('_');
    }
    name
}

/// Alpha-style miner over event-type traces. Traces are augmented with
/// artificial start/end activities (kept silent in the result), which
/// guarantees unique endpoints; any transition the alpha relations leave
/// unconnected is wired to the endpoints so the result is always a workflow
/// net.
pub fn mine_traces(traces: &[Vec<String>]) -> Result<PetriNet> {
    if traces.is_empty() {
        return Err(Error::EmptyLog);
    }
    let activity_names: HashSet<&str> = traces.iter().flatten().map(|s| s.as_str()).collect();
    let start = fresh_name("_start", &activity_names);
    let end = fresh_name("_end", &activity_names);
    let augmented: Vec<Vec<&str>> = traces
        .iter()
        .map(|t| {
            std::iter::once(start.as_str())
                .chain(t.iter().map(|s| s.as_str()))
                .chain(std::iter::once(end.as_str()))
                .collect()
        })
        .collect();
    let mut activities: Vec<&str> = augmented.iter().flatten().copied().collect();
    activities.sort();
    activities.dedup();

    let mut follows: HashSet<(&str, &str)> = HashSet::new();
    for trace in &augmented {
        for w in trace.windows(2) {
            follows.insert((w[0], w[1]));
        }
    }
    let causal =
        |a: &str, b: &str| follows.contains(&(a, b)) && !follows.contains(&(b, a));
    let choice =
        |a: &str, b: &str| !follows.contains(&(a, b)) && !follows.contains(&(b, a));

    // grow causally-consistent (A, B) pairs from singletons, keep the maximal
    // ones
    let valid = |a_set: &BTreeSet<&str>, b_set: &BTreeSet<&str>| {
        a_set.iter().all(|a| b_set.iter().all(|b| causal(a, b)))
            && a_set.iter().all(|x| a_set.iter().all(|y| x == y || choice(x, y)))
            && b_set.iter().all(|x| b_set.iter().all(|y| x == y || choice(x, y)))
    };
    let mut pairs: BTreeSet<(BTreeSet<&str>, BTreeSet<&str>)> = BTreeSet::new();
    let mut queue: VecDeque<(BTreeSet<&str>, BTreeSet<&str>)> = VecDeque::new();
    for &a in &activities {
        for &b in &activities {
            if causal(a, b) {
                let pair = (BTreeSet::from([a]), BTreeSet::from([b]));
                if pairs.insert(pair.clone()) {
                    queue.push_back(pair);
                }
            }
        }
    }
    while let Some((a_set, b_set)) = queue.pop_front() {
        for &x in &activities {
            let mut grown_a = a_set.clone();
            if grown_a.insert(x) && valid(&grown_a, &b_set) {
                let pair = (grown_a, b_set.clone());
                if pairs.insert(pair.clone()) {
                    queue.push_back(pair);
                }
            }
            let mut grown_b = b_set.clone();
            if grown_b.insert(x) && valid(&a_set, &grown_b) {
                let pair = (a_set.clone(), grown_b);
                if pairs.insert(pair.clone()) {
                    queue.push_back(pair);
                }
            }
        }
    }
    let maximal: Vec<&(BTreeSet<&str>, BTreeSet<&str>)> = pairs
        .iter()
        .filter(|(a, b)| {
            !pairs.iter().any(|(a2, b2)| {
                (a2, b2) != (a, b) && a.is_subset(a2) && b.is_subset(b2)
            })
        })
        .collect();

    let mut net = PetriNet {
        places: vec!["start".into(), "end".into()],
        transitions: activities
            .iter()
            .map(|&a| {
                if a == start || a == end {
                    Transition::silent(a)
                } else {
                    Transition::visible(a)
                }
            })
            .collect(),
        arcs: vec![
            Arc {
                from: "start".into(),
                to: start.clone(),
            },
            Arc {
                from: end.clone(),
                to: "end".into(),
            },
        ],
        initial: Some("start".into()),
        final_place: Some("end".into()),
    };
    for (i, (a_set, b_set)) in maximal.iter().enumerate() {
        let place = format!("p{i}");
        for a in a_set.iter() {
            net.arcs.push(Arc {
                from: a.to_string(),
                to: place.clone(),
            });
        }
        for b in b_set.iter() {
            net.arcs.push(Arc {
                from: place.clone(),
                to: b.to_string(),
            });
        }
        net.places.push(place);
    }
    // wire any unconnected transition to the endpoints: alpha leaves an
    // activity placeless when it is parallel to everything around it
    let idx_snapshot: Vec<(String, bool, bool)> = {
        let idx = net.index();
        net.transitions
            .iter()
            .map(|t| {
                (
                    t.name.clone(),
                    idx.pre_t[t.name.as_str()].is_empty(),
                    idx.post_t[t.name.as_str()].is_empty(),
                )
            })
            .collect()
    };
    for (name, no_pre, no_post) in idx_snapshot {
        if no_pre {
            let place = format!("p_in_{name}");
            net.arcs.push(Arc {
                from: start.clone(),
                to: place.clone(),
            });
            net.arcs.push(Arc {
                from: place.clone(),
                to: name.clone(),
            });
            net.places.push(place);
        }
        if no_post {
            let place = format!("p_out_{name}");
            net.arcs.push(Arc {
                from: name.clone(),
                to: place.clone(),
            });
            net.arcs.push(Arc {
                from: place.clone(),
                to: end.clone(),
            });
            net.places.push(place);
        }
    }
    net.validate()?;
    Ok(net)
}

/// Mine a lifecycle model from an extracted log.
pub fn mine_lifecycle(log: &LifecycleLog) -> Result<PetriNet> {
    mine_traces(&log.traces())
}

/// DOT rendering: places as circles, transitions as boxes, silent transitions
/// filled black.
pub fn to_dot(net: &PetriNet) -> String {
    let mut out = String::from("digraph petri {\n  rankdir=LR;\n");
    for p in &net.places {
        let deco = if net.initial.as_deref() == Some(p) || net.final_place.as_deref() == Some(p) {
            ", penwidth=2"
        } else {
            ""
        };
        out.push_str(&format!("  \"{p}\" [shape=circle{deco}];\n"));
    }
    for t in &net.transitions {
        if t.visible {
            out.push_str(&format!(
                "  \"{}\" [shape=box, label=\"{}\"];\n",
                t.name,
                t.display_label()
            ));
        } else {
            out.push_str(&format!(
                "  \"{}\" [shape=box, style=filled, fillcolor=black, label=\"\"];\n",
                t.name
            ));
        }
    }
    for a in &net.arcs {
        out.push_str(&format!("  \"{}\" -> \"{}\";\n", a.from, a.to));
    }
    out.push_str("}\n");
    out
}

/// PNML export: core net and name labels only. Silent transitions carry no
/// name element; the initial place carries an initialMarking.
pub fn to_pnml(net: &PetriNet) -> String {
    use std::fmt::Write;
    let escape = |s: &str| {
        s.replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;")
            .replace('"', "&quot;")
    };
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<pnml xmlns=\"http://www.pnml.org/version-2009/grammar/pnml\">\n  <net id=\"net1\" type=\"http://www.pnml.org/version-2009/grammar/ptnet\">\n    <page id=\"page1\">\n",
    );
    for p in &net.places {
        write!(out, "      <place id=\"{}\">", escape(p)).unwrap();
        write!(out, "<name><text>{}</text></name>", escape(p)).unwrap();
        if net.initial.as_deref() == Some(p.as_str()) {
            out.push_str("<initialMarking><text>1</text></initialMarking>");
        }
        out.push_str("</place>\n");
    }
    for t in &net.transitions {
        write!(out, "      <transition id=\"{}\">", escape(&t.name)).unwrap();
        if t.visible {
            write!(out, "<name><text>{}</text></name>", escape(t.display_label())).unwrap();
        }
        out.push_str("</transition>\n");
    }
    for (i, a) in net.arcs.iter().enumerate() {
        writeln!(
            out,
            "      <arc id=\"a{i}\" source=\"{}\" target=\"{}\"/>",
            escape(&a.from),
            escape(&a.to)
        )
        .unwrap();
    }
    out.push_str("    </page>\n  </net>\n</pnml>\n");
    out
}

/// PNML import, inverse of `to_pnml` for the core-net subset: a transition
/// without a name element is treated as silent. Initial place comes from the
/// initialMarking (or the unique source), final place from the unique sink.
pub fn from_pnml(text: &str) -> Result<PetriNet> {
    use quick_xml::events::Event as XmlEvent;
    use quick_xml::Reader;

    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut net = PetriNet {
        places: Vec::new(),
        transitions: Vec::new(),
        arcs: Vec::new(),
        initial: None,
        final_place: None,
    };
    #[derive(PartialEq)]
    enum In {
        None,
        Place,
        Transition,
    }
    let mut state = In::None;
    let mut stack: Vec<String> = Vec::new();
    let mut current_id = String::new();
    let mut named = false;
    let mut initially_marked = false;
    let mut current_name: Option<String> = None;
    loop {
        match reader.read_event().map_err(|e| Error::Xml(e.to_string()))? {
            XmlEvent::Start(e) | XmlEvent::Empty(e) => {
                let tag = String::from_utf8_lossy(e.local_name().as_ref()).to_string();
                let id_attr = e
                    .attributes()
                    .flatten()
                    .find(|a| a.key.local_name().as_ref() == b"id")
                    .map(|a| String::from_utf8_lossy(&a.value).to_string());
                match tag.as_str() {
                    "place" => {
                        state = In::Place;
                        current_id = id_attr.unwrap_or_default();
                        named = false;
                        initially_marked = false;
                        current_name = None;
                    }
                    "transition" => {
                        state = In::Transition;
                        current_id = id_attr.unwrap_or_default();
                        named = false;
                        current_name = None;
                    }
                    "arc" => {
                        let get = |key: &[u8]| {
                            e.attributes()
                                .flatten()
                                .find(|a| a.key.local_name().as_ref() == key)
                                .map(|a| String::from_utf8_lossy(&a.value).to_string())
                        };
                        let (Some(source), Some(target)) = (get(b"source"), get(b"target")) else {
                            return Err(Error::Xml("arc without source/target".into()));
                        };
                        net.arcs.push(Arc {
                            from: source,
                            to: target,
                        });
                    }
                    _ => {}
                }
                stack.push(tag);
            }
            XmlEvent::Text(t) => {
                let text = t.unescape().map_err(|e| Error::Xml(e.to_string()))?.to_string();
                let in_tag = |name: &str| stack.iter().rev().nth(1).map(|s| s.as_str()) == Some(name);
                if stack.last().map(|s| s.as_str()) == Some("text") {
                    if in_tag("name") && state != In::None {
                        named = true;
                        current_name = Some(text);
                    } else if in_tag("initialMarking") && state == In::Place {
                        initially_marked = text.trim() != "0";
                    }
                }
            }
            XmlEvent::End(e) => {
                let tag = String::from_utf8_lossy(e.local_name().as_ref()).to_string();
                stack.pop();
                match tag.as_str() {
                    "place" => {
                        net.places.push(current_id.clone());
                        if initially_marked {
                            net.initial = Some(current_id.clone());
                        }
                        state = In::None;
                    }
                    "transition" => {
                        net.transitions.push(Transition {
                            name: current_id.clone(),
                            label: current_name.take().filter(|n| n != &current_id),
                            visible: named,
                        });
                        state = In::None;
                    }
                    _ => {}
                }
            }
            XmlEvent::Eof => break,
            _ => {}
        }
    }
    // fall back to structure for missing designations
    let (source, sink) = {
        let idx = net.index();
        let unique = |map: &BTreeMap<&str, Vec<&str>>| -> Option<String> {
            let hits: Vec<&str> = net
                .places
                .iter()
                .map(|p| p.as_str())
                .filter(|p| map[p].is_empty())
                .collect();
            match hits.as_slice() {
                [only] => Some(only.to_string()),
                _ => None,
            }
        };
        (unique(&idx.pre_p), unique(&idx.post_p))
    };
    if net.initial.is_none() {
        net.initial = source;
    }
    if net.final_place.is_none() {
        net.final_place = sink;
    }
    net.validate()?;
    Ok(net)
}
