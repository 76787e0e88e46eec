//! Translation of sound free-choice workflow nets (with per-arc branch
//! conditions) into GSM models: expression trees, DNF, Alt sets and sentry
//! rendering.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsm::{Cond, EventSpec, GsmModel, Sentry, Stage, INIT};
use crate::petri::{is_free_choice, is_sound, is_workflow_net, PetriNet, Soundness, Transition};

/// Per-arc branch conditions plus the finite domains of the condition
/// variables. Keys are `place -> transition`, values `var = value`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchConditions {
    #[serde(default)]
    pub conditions: BTreeMap<String, String>,
    #[serde(default)]
    pub domains: BTreeMap<String, Vec<String>>,
}

impl BranchConditions {
    /// Parsed map (place, transition) -> (variable, value).
    pub fn parsed(&self) -> Result<BTreeMap<(String, String), (String, String)>> {
        let mut out = BTreeMap::new();
        for (arc, cond) in &self.conditions {
            let (place, transition) = arc.split_once("->").ok_or_else(|| {
                Error::Config(format!("branch condition key `{arc}`: expected `place -> transition`"))
            })?;
            let (var, value) = cond.split_once('=').ok_or_else(|| {
                Error::Config(format!("branch condition `{cond}`: expected `var = value`"))
            })?;
            let (var, value) = (var.trim().to_string(), value.trim().to_string());
            match self.domains.get(&var) {
                None => {
                    return Err(Error::Config(format!(
                        "branch condition variable {var} has no declared domain"
                    )))
                }
                Some(domain) if !domain.contains(&value) => {
                    return Err(Error::Config(format!(
                        "branch condition value {value} outside the domain of {var}"
                    )))
                }
                _ => {}
            }
            out.insert(
                (place.trim().to_string(), transition.trim().to_string()),
                (var, value),
            );
        }
        Ok(out)
    }

    /// All valuations over the declared domains (cartesian product).
    pub fn valuations(&self) -> Vec<BTreeMap<String, String>> {
        let mut out = vec![BTreeMap::new()];
        for (var, domain) in &self.domains {
            let mut next = Vec::new();
            for valuation in &out {
                for value in domain {
                    let mut v = valuation.clone();
                    v.insert(var.clone(), value.clone());
                    next.push(v);
                }
            }
            out = next;
        }
        out
    }
}

/// Predicate: is `t` allowed to fire under `valuation` given the branch
/// conditions on its input arcs?
pub fn allowed_under<'a>(
    conds: &'a BTreeMap<(String, String), (String, String)>,
    net: &PetriNet,
    valuation: &'a BTreeMap<String, String>,
) -> impl Fn(&Transition) -> bool + 'a {
    let mut per_transition: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for ((_, t), cond) in conds {
        per_transition.entry(t.clone()).or_default().push(cond.clone());
    }
    let _ = net;
    move |t: &Transition| {
        per_transition
            .get(&t.name)
            .map(|cs| cs.iter().all(|(var, value)| valuation.get(var) == Some(value)))
            .unwrap_or(true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Leaf {
    Init,
    TransitionRef(String),
    Condition(String, String),
}

/// Expression tree for enabled(t): AND/OR over transition references, branch
/// conditions and Init.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprTree {
    And(Vec<ExprTree>),
    Or(Vec<ExprTree>),
    Leaf(Leaf),
}

impl ExprTree {
    fn and(mut children: Vec<ExprTree>) -> ExprTree {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            ExprTree::And(children)
        }
    }

    fn or(mut children: Vec<ExprTree>) -> ExprTree {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            ExprTree::Or(children)
        }
    }
}

struct TreeBuilder<'a> {
    net: &'a PetriNet,
    idx: crate::petri::NetIndex<'a>,
    conds: &'a BTreeMap<(String, String), (String, String)>,
    memo: BTreeMap<String, ExprTree>,
    in_progress: Vec<String>,
}

impl<'a> TreeBuilder<'a> {
    fn enabled(&mut self, t: &str) -> Result<ExprTree> {
        if let Some(tree) = self.memo.get(t) {
            return Ok(tree.clone());
        }
        if let Some(at) = self.in_progress.iter().position(|x| x == t) {
            let cycle = self.in_progress[at..].join(" -> ");
            return Err(Error::Translation(format!(
                "cycle of invisible transitions: {cycle} -> {t}"
            )));
        }
        self.in_progress.push(t.to_string());
        let mut conjuncts = Vec::new();
        let pre: Vec<&str> = self.idx.pre_t[t].clone();
        for place in pre {
            conjuncts.push(self.markable(place)?);
            if let Some((var, value)) = self.conds.get(&(place.to_string(), t.to_string())) {
                conjuncts.push(ExprTree::Leaf(Leaf::Condition(var.clone(), value.clone())));
            }
        }
        self.in_progress.pop();
        let tree = ExprTree::and(conjuncts);
        self.memo.insert(t.to_string(), tree.clone());
        Ok(tree)
    }

    fn markable(&mut self, p: &str) -> Result<ExprTree> {
        if self.net.initial.as_deref() == Some(p) {
            return Ok(ExprTree::Leaf(Leaf::Init));
        }
        let producers: Vec<&str> = self.idx.pre_p[p].clone();
        let mut disjuncts = Vec::new();
        for r in producers {
            disjuncts.push(self.occurred(r)?);
        }
        if disjuncts.is_empty() {
            return Err(Error::Translation(format!(
                "place {p} can never be marked (no producers, not initial)"
            )));
        }
        Ok(ExprTree::or(disjuncts))
    }

    fn occurred(&mut self, r: &str) -> Result<ExprTree> {
        if self.net.transition(r).map(|t| t.visible).unwrap_or(false) {
            Ok(ExprTree::Leaf(Leaf::TransitionRef(r.to_string())))
        } else {
            self.enabled(r)
        }
    }
}

/// Build the enabling expression tree for a visible transition.
pub fn build_expr_tree(
    net: &PetriNet,
    t_o: &str,
    conds: &BTreeMap<(String, String), (String, String)>,
) -> Result<ExprTree> {
    let mut builder = TreeBuilder {
        net,
        idx: net.index(),
        conds,
        memo: BTreeMap::new(),
        in_progress: Vec::new(),
    };
    builder.enabled(t_o)
}

/// Disjunctive normal form with duplicate and subsumed disjuncts removed.
pub fn to_dnf(tree: &ExprTree) -> Vec<BTreeSet<Leaf>> {
    fn go(tree: &ExprTree) -> Vec<BTreeSet<Leaf>> {
        match tree {
            ExprTree::Leaf(leaf) => vec![BTreeSet::from([leaf.clone()])],
            ExprTree::Or(children) => children.iter().flat_map(go).collect(),
            ExprTree::And(children) => {
                let mut acc: Vec<BTreeSet<Leaf>> = vec![BTreeSet::new()];
                for child in children {
                    let child_dnf = go(child);
                    let mut next = Vec::new();
                    for left in &acc {
                        for right in &child_dnf {
                            let mut merged = left.clone();
                            merged.extend(right.iter().cloned());
                            next.push(merged);
                        }
                    }
                    acc = next;
                }
                acc
            }
        }
    }
    let mut disjuncts = go(tree);
    disjuncts.sort();
    disjuncts.dedup();
    let keep: Vec<bool> = disjuncts
        .iter()
        .map(|d| {
            !disjuncts
                .iter()
                .any(|other| other != d && other.is_subset(d))
        })
        .collect();
    disjuncts
        .into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect()
}

/// Places reachable from `start` nodes along paths whose interior transitions
/// are all invisible; returns the set of visible transitions consuming from
/// any such place that can also pass its token on to `t_o` τ-internally.
fn alt_from_places(net: &PetriNet, places: &BTreeSet<String>, t_o: &str) -> BTreeSet<String> {
    let idx = net.index();
    let mut alt = BTreeSet::new();
    for p in places {
        // transitions reachable from p through invisible transitions only
        let mut reach: BTreeSet<&str> = BTreeSet::new();
        let mut place_frontier = VecDeque::from([p.as_str()]);
        let mut seen_places = BTreeSet::from([p.as_str()]);
        while let Some(place) = place_frontier.pop_front() {
            for t in &idx.post_p[place] {
                if reach.insert(t) && !net.transition(t).unwrap().visible {
                    for out in &idx.post_t[t] {
                        if seen_places.insert(out) {
                            place_frontier.push_back(out);
                        }
                    }
                }
            }
        }
        if reach.contains(t_o) {
            alt.extend(
                reach
                    .iter()
                    .filter(|t| net.transition(t).unwrap().visible)
                    .map(|t| t.to_string()),
            );
        }
    }
    alt
}

/// Places τ-reachable after firing `t_p` (interior transitions invisible).
fn places_tau_after(net: &PetriNet, t_p: &str) -> BTreeSet<String> {
    let idx = net.index();
    let mut places: BTreeSet<String> = BTreeSet::new();
    let mut frontier: VecDeque<&str> = idx.post_t[t_p].iter().copied().collect();
    while let Some(p) = frontier.pop_front() {
        if !places.insert(p.to_string()) {
            continue;
        }
        for t in &idx.post_p[p] {
            if !net.transition(t).unwrap().visible {
                for out in &idx.post_t[t] {
                    frontier.push_back(out);
                }
            }
        }
    }
    places
}

/// Alt(t_p, t_o): visible transitions competing with t_o for a token
/// produced by t_p, following τ-paths. t_o is always a member when related.
pub fn alt_set(net: &PetriNet, t_p: &str, t_o: &str) -> BTreeSet<String> {
    let places = if t_p == INIT {
        net.initial.iter().cloned().collect()
    } else {
        places_tau_after(net, t_p)
    };
    alt_from_places(net, &places, t_o)
}

/// Render one guard per DNF disjunct, using the simple event format when the
/// disjunct carries exactly one transition reference and no Init, and the
/// complex tokenAvailable/executedAfter format otherwise. Conjunct order is
/// canonical: hasBeenAchieved atoms, then lastToggled comparisons, then data
/// conditions, each alphabetical.
pub fn render_sentries(
    net: &PetriNet,
    t_o: &str,
    dnf: &[BTreeSet<Leaf>],
) -> Vec<Sentry> {
    let mut sentries = Vec::new();
    for disjunct in dnf {
        let mut refs: Vec<&str> = Vec::new();
        let mut has_init = false;
        let mut data: BTreeSet<(String, String)> = BTreeSet::new();
        for leaf in disjunct {
            match leaf {
                Leaf::Init => has_init = true,
                Leaf::TransitionRef(t) => refs.push(t),
                Leaf::Condition(var, value) => {
                    data.insert((var.clone(), value.clone()));
                }
            }
        }
        let data_conds: Vec<Cond> = data
            .iter()
            .map(|(var, value)| Cond::DataEq(var.clone(), value.clone()))
            .collect();
        let sentry = if refs.len() == 1 && !has_init {
            let event = EventSpec::MilestoneAchieved(refs[0].to_string());
            if data_conds.is_empty() {
                Sentry::on(event)
            } else {
                Sentry::on_if(event, Cond::And(data_conds).simplify())
            }
        } else if refs.is_empty() && has_init {
            if data_conds.is_empty() {
                Sentry::on(EventSpec::OnCreate)
            } else {
                Sentry::on_if(EventSpec::OnCreate, Cond::And(data_conds).simplify())
            }
        } else {
            // complex format: conjunction over token providers of
            // tokenAvailable(t_p, t_o)
            let mut achieved: BTreeSet<String> = BTreeSet::new();
            let mut toggled: BTreeSet<(String, String)> = BTreeSet::new();
            let mut providers: Vec<String> = refs.iter().map(|r| r.to_string()).collect();
            if has_init {
                providers.push(INIT.to_string());
            }
            for t_p in &providers {
                achieved.insert(t_p.clone());
                for t_s in alt_set(net, t_p, t_o) {
                    toggled.insert((t_p.clone(), t_s));
                }
            }
            let mut atoms: Vec<Cond> = achieved.into_iter().map(Cond::HasBeenAchieved).collect();
            atoms.extend(toggled.into_iter().map(|(a, b)| Cond::ToggledAfter(a, b)));
            atoms.extend(data_conds);
            Sentry::when(Cond::And(atoms).simplify())
        };
        sentries.push(sentry);
    }
    sentries.sort_by_key(|s| s.to_string());
    sentries
}

impl Cond {
    fn simplify(self) -> Cond {
        match self {
            Cond::And(mut cs) if cs.len() == 1 => cs.pop().unwrap(),
            other => other,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TranslateOptions {
    pub artifact: String,
    pub state_cap: usize,
    /// accept a soundness verdict of Inconclusive (user override)
    pub allow_inconclusive: bool,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        TranslateOptions {
            artifact: "artifact".into(),
            state_cap: 10_000,
            allow_inconclusive: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Translation {
    pub model: GsmModel,
    pub warnings: Vec<String>,
}

/// Translate a sound free-choice workflow net into a GSM model: one atomic
/// stage per visible transition, guards from the DNF of its enabling
/// expression tree, conventional milestone sentries.
pub fn translate_with(
    net: &PetriNet,
    conds: &BranchConditions,
    options: &TranslateOptions,
) -> Result<Translation> {
    net.validate()?;
    let wf = is_workflow_net(net);
    if !wf.ok {
        return Err(Error::Translation(format!(
            "not a workflow net: {}",
            wf.witnesses.join("; ")
        )));
    }
    let fc = is_free_choice(net);
    if !fc.ok {
        return Err(Error::Translation(format!(
            "not free-choice: {}",
            fc.witnesses.join("; ")
        )));
    }
    match is_sound(net, options.state_cap)? {
        Soundness::Sound => {}
        Soundness::Unsound(witness) => {
            return Err(Error::Translation(format!("net is unsound: {witness}")))
        }
        Soundness::Inconclusive if options.allow_inconclusive => {}
        Soundness::Inconclusive => {
            return Err(Error::Translation(
                "soundness inconclusive at the configured state cap".into(),
            ))
        }
    }
    let parsed = conds.parsed()?;
    let mut warnings = Vec::new();
    let idx = net.index();
    for place in &net.places {
        let consumers = &idx.post_p[place.as_str()];
        if consumers.len() > 1 {
            for t in consumers {
                if !parsed.contains_key(&(place.clone(), t.to_string())) {
                    warnings.push(format!(
                        "choice arc {place} -> {t} has no branch condition; guards are nondeterministic"
                    ));
                }
            }
        }
    }
    for (place, transition) in parsed.keys() {
        if !net.arcs.iter().any(|a| &a.from == place && &a.to == transition) {
            warnings.push(format!(
                "branch condition on unknown arc {place} -> {transition}"
            ));
        }
    }

    let mut stages = Vec::new();
    let mut used_vars: BTreeSet<String> = BTreeSet::new();
    for t in net.transitions.iter().filter(|t| t.visible) {
        let tree = build_expr_tree(net, &t.name, &parsed)?;
        let dnf = to_dnf(&tree);
        for disjunct in &dnf {
            for leaf in disjunct {
                if let Leaf::Condition(var, _) = leaf {
                    used_vars.insert(var.clone());
                }
            }
        }
        let guards = render_sentries(net, &t.name, &dnf);
        stages.push(Stage::atomic(t.name.clone(), guards));
    }
    let variables = conds
        .domains
        .iter()
        .filter(|(var, _)| used_vars.contains(var.as_str()))
        .map(|(var, domain)| (var.clone(), domain.clone()))
        .collect();
    let model = GsmModel {
        artifact: options.artifact.clone(),
        stages,
        variables,
    };
    let diagnostics = crate::gsm::validate(&model);
    if !diagnostics.is_empty() {
        return Err(Error::Translation(format!(
            "translated model failed validation: {}",
            diagnostics.join("; ")
        )));
    }
    Ok(Translation { model, warnings })
}

pub fn translate(net: &PetriNet, conds: &BranchConditions) -> Result<Translation> {
    translate_with(net, conds, &TranslateOptions::default())
}

/// Human-readable guard table: one row per guard, stages in model order.
pub fn render_guard_table(model: &GsmModel) -> String {
    let width = model
        .stages
        .iter()
        .map(|s| s.name.len())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for stage in &model.stages {
        for guard in &stage.guards {
            out.push_str(&format!("{:width$}  {}\n", stage.name, guard));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsm::{gsm_language_with, gsm_step, ExternalInput, GsmState, InternalEvent};
    use crate::petri::{prefix_traces_filtered, Arc as PArc};

    fn reference_net() -> PetriNet {
        serde_json::from_str(include_str!("../fixtures/material_order_net.json")).unwrap()
    }

    fn reference_conds() -> BranchConditions {
        serde_json::from_str(include_str!("../fixtures/material_order_conditions.json")).unwrap()
    }

    fn leaf_ref(t: &str) -> ExprTree {
        ExprTree::Leaf(Leaf::TransitionRef(t.into()))
    }

    #[test]
    fn expr_tree_for_complete_mo() {
        let net = reference_net();
        let conds = reference_conds().parsed().unwrap();
        let tree = build_expr_tree(&net, "CompleteMO", &conds).unwrap();
        let expected = ExprTree::And(vec![
            leaf_ref("InvoiceMO"),
            ExprTree::Or(vec![
                leaf_ref("AssembleMO"),
                ExprTree::And(vec![
                    leaf_ref("ReceiveItems"),
                    ExprTree::Leaf(Leaf::Condition("quality".into(), "notacceptable".into())),
                ]),
            ]),
        ]);
        assert_eq!(tree, expected);
    }

    #[test]
    fn expr_tree_simple_cases() {
        let net = reference_net();
        let conds = reference_conds().parsed().unwrap();
        assert_eq!(
            build_expr_tree(&net, "CreateMO", &conds).unwrap(),
            ExprTree::Leaf(Leaf::Init)
        );
        assert_eq!(
            build_expr_tree(&net, "ReceiveMO", &conds).unwrap(),
            leaf_ref("CreateMO")
        );
    }

    #[test]
    fn tau_cycle_is_an_error() {
        let mut net = reference_net();
        // invisible 2-cycle feeding CompleteMO's pre-place
        net.transitions.push(crate::petri::Transition::silent("tau_a"));
        net.transitions.push(crate::petri::Transition::silent("tau_b"));
        net.places.push("cx".into());
        net.arcs.push(PArc { from: "p6".into(), to: "tau_a".into() });
        net.arcs.push(PArc { from: "tau_a".into(), to: "cx".into() });
        net.arcs.push(PArc { from: "cx".into(), to: "tau_b".into() });
        net.arcs.push(PArc { from: "tau_b".into(), to: "p6".into() });
        let conds = reference_conds().parsed().unwrap();
        let err = build_expr_tree(&net, "CompleteMO", &conds);
        assert!(matches!(err, Err(Error::Translation(m)) if m.contains("cycle")));
    }

    #[test]
    fn dnf_of_reference_tree() {
        let net = reference_net();
        let conds = reference_conds().parsed().unwrap();
        let tree = build_expr_tree(&net, "CompleteMO", &conds).unwrap();
        let dnf = to_dnf(&tree);
        assert_eq!(dnf.len(), 2);
        assert!(dnf.contains(&BTreeSet::from([
            Leaf::TransitionRef("InvoiceMO".into()),
            Leaf::TransitionRef("AssembleMO".into()),
        ])));
        assert!(dnf.contains(&BTreeSet::from([
            Leaf::TransitionRef("InvoiceMO".into()),
            Leaf::TransitionRef("ReceiveItems".into()),
            Leaf::Condition("quality".into(), "notacceptable".into()),
        ])));
    }

    #[test]
    fn dnf_subsumption() {
        let a = ExprTree::Leaf(Leaf::TransitionRef("a".into()));
        let ab = ExprTree::And(vec![
            ExprTree::Leaf(Leaf::TransitionRef("a".into())),
            ExprTree::Leaf(Leaf::TransitionRef("b".into())),
        ]);
        let dnf = to_dnf(&ExprTree::Or(vec![a, ab]));
        assert_eq!(dnf, vec![BTreeSet::from([Leaf::TransitionRef("a".into())])]);
    }

    #[test]
    fn alt_sets() {
        let net = reference_net();
        assert_eq!(
            alt_set(&net, "ReceiveItems", "CompleteMO"),
            BTreeSet::from(["AssembleMO".to_string(), "CompleteMO".to_string()])
        );
        assert_eq!(
            alt_set(&net, "CreateMO", "ReceiveMO"),
            BTreeSet::from(["ReceiveMO".to_string()])
        );
        // two visible competitors on one place
        let competing = PetriNet {
            places: vec!["i".into(), "p".into(), "o".into()],
            transitions: vec![
                crate::petri::Transition::visible("produce"),
                crate::petri::Transition::visible("take1"),
                crate::petri::Transition::visible("take2"),
            ],
            arcs: vec![
                PArc { from: "i".into(), to: "produce".into() },
                PArc { from: "produce".into(), to: "p".into() },
                PArc { from: "p".into(), to: "take1".into() },
                PArc { from: "p".into(), to: "take2".into() },
                PArc { from: "take1".into(), to: "o".into() },
                PArc { from: "take2".into(), to: "o".into() },
            ],
            initial: Some("i".into()),
            final_place: Some("o".into()),
        };
        assert_eq!(
            alt_set(&competing, "produce", "take1"),
            BTreeSet::from(["take1".to_string(), "take2".to_string()])
        );
    }

    #[test]
    fn translated_reference_model_guard_table() {
        let net = reference_net();
        let translation = translate(&net, &reference_conds()).unwrap();
        assert!(translation.warnings.is_empty());
        let model = &translation.model;
        assert_eq!(model.stages.len(), 9);
        let guard_strings = |stage: &str| -> Vec<String> {
            model
                .stage(stage)
                .unwrap()
                .guards
                .iter()
                .map(|g| g.to_string())
                .collect()
        };
        assert_eq!(guard_strings("CreateMO"), vec!["onCreate()"]);
        assert_eq!(
            guard_strings("ReceiveMO"),
            vec!["on CreateMOMilestoneAchieved()"]
        );
        assert_eq!(
            guard_strings("ReceiveSupplResponse"),
            vec!["on ReceiveMOMilestoneAchieved()"]
        );
        assert_eq!(
            guard_strings("ReassignSupplier"),
            vec!["on ReceiveSupplResponseMilestoneAchieved() if answer = reject"]
        );
        assert_eq!(
            guard_strings("InvoiceMO"),
            vec!["on ReceiveSupplResponseMilestoneAchieved() if answer = accept"]
        );
        assert_eq!(
            guard_strings("ReceiveItems"),
            vec!["on ReceiveSupplResponseMilestoneAchieved() if answer = accept"]
        );
        assert_eq!(
            guard_strings("AssembleMO"),
            vec!["on ReceiveItemsMilestoneAchieved() if quality = acceptable"]
        );
        assert_eq!(
            guard_strings("CompleteMO"),
            vec![
                "AssembleMOMilestone.hasBeenAchieved and InvoiceMOMilestone.hasBeenAchieved \
                 and AssembleMOMilestone.lastToggled > CompleteMOMilestone.lastToggled \
                 and InvoiceMOMilestone.lastToggled > CompleteMOMilestone.lastToggled",
                "InvoiceMOMilestone.hasBeenAchieved and ReceiveItemsMilestone.hasBeenAchieved \
                 and InvoiceMOMilestone.lastToggled > CompleteMOMilestone.lastToggled \
                 and ReceiveItemsMilestone.lastToggled > AssembleMOMilestone.lastToggled \
                 and ReceiveItemsMilestone.lastToggled > CompleteMOMilestone.lastToggled \
                 and quality = notacceptable",
            ]
        );
        assert_eq!(
            guard_strings("CloseMO"),
            vec![
                "on CompleteMOMilestoneAchieved()",
                "on ReassignSupplierMilestoneAchieved()",
            ]
        );
        let total_guards: usize = model.stages.iter().map(|s| s.guards.len()).sum();
        assert_eq!(total_guards, 11);
        // guard table text mentions every stage
        let table = render_guard_table(model);
        for stage in &model.stages {
            assert!(table.contains(&stage.name));
        }
    }

    #[test]
    fn translation_is_deterministic() {
        let net = reference_net();
        let a = serde_json::to_string(&translate(&net, &reference_conds()).unwrap().model).unwrap();
        let b = serde_json::to_string(&translate(&net, &reference_conds()).unwrap().model).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_transition_net_translates_to_oncreate() {
        let net = PetriNet {
            places: vec!["i".into(), "o".into()],
            transitions: vec![crate::petri::Transition::visible("t")],
            arcs: vec![
                PArc { from: "i".into(), to: "t".into() },
                PArc { from: "t".into(), to: "o".into() },
            ],
            initial: Some("i".into()),
            final_place: Some("o".into()),
        };
        let translation = translate(&net, &BranchConditions::default()).unwrap();
        assert_eq!(translation.model.stages.len(), 1);
        assert_eq!(
            translation.model.stages[0].guards[0].to_string(),
            "onCreate()"
        );
    }

    #[test]
    fn sequential_net_guards_on_predecessor_milestone() {
        let net = PetriNet {
            places: vec!["i".into(), "m".into(), "o".into()],
            transitions: vec![
                crate::petri::Transition::visible("first"),
                crate::petri::Transition::visible("second"),
            ],
            arcs: vec![
                PArc { from: "i".into(), to: "first".into() },
                PArc { from: "first".into(), to: "m".into() },
                PArc { from: "m".into(), to: "second".into() },
                PArc { from: "second".into(), to: "o".into() },
            ],
            initial: Some("i".into()),
            final_place: Some("o".into()),
        };
        let translation = translate(&net, &BranchConditions::default()).unwrap();
        assert_eq!(
            translation
                .model
                .stage("second")
                .unwrap()
                .guards[0]
                .to_string(),
            "on firstMilestoneAchieved()"
        );
    }

    #[test]
    fn missing_choice_condition_warns() {
        let net = reference_net();
        let mut conds = reference_conds();
        conds.conditions.remove("p3 -> ReassignSupplier");
        let translation = translate(&net, &conds).unwrap();
        assert!(translation
            .warnings
            .iter()
            .any(|w| w.contains("p3 -> ReassignSupplier")));
    }

    #[test]
    fn unsound_net_is_rejected() {
        let mut net = reference_net();
        // disconnect CompleteMO's second input so p6 tokens leak
        net.arcs.retain(|a| !(a.from == "p6" && a.to == "CompleteMO"));
        net.places.retain(|p| p != "p6");
        net.arcs.retain(|a| a.to != "p6" && a.from != "p6");
        let err = translate(&net, &reference_conds());
        assert!(matches!(err, Err(Error::Translation(_))));
    }

    #[test]
    fn oncreate_cascades_until_first_condition() {
        let net = reference_net();
        let model = translate(&net, &reference_conds()).unwrap().model;
        let (state, emitted) =
            gsm_step(&model, &GsmState::default(), Some(ExternalInput::Create)).unwrap();
        let tasks: Vec<&str> = emitted
            .iter()
            .filter_map(|e| match e {
                InternalEvent::TaskExecuted(t) => Some(t.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(tasks, vec!["CreateMO", "ReceiveMO", "ReceiveSupplResponse"]);
        assert!(state.achieved.contains("ReceiveSupplResponse"));
        assert!(!state.achieved.contains("InvoiceMO"));
    }

    #[test]
    fn reference_net_and_translated_model_have_equal_trace_sets() {
        let net = reference_net();
        let conds = reference_conds();
        let parsed = conds.parsed().unwrap();
        let model = translate(&net, &conds).unwrap().model;
        for valuation in conds.valuations() {
            let allowed = allowed_under(&parsed, &net, &valuation);
            let pn = prefix_traces_filtered(&net, 10, 1_000_000, &allowed).unwrap();
            let gsm = gsm_language_with(&model, 10, &valuation);
            assert_eq!(pn, gsm, "valuation {valuation:?}");
        }
    }

    fn eval_tree(tree: &ExprTree, truth: &BTreeMap<Leaf, bool>) -> bool {
        match tree {
            ExprTree::And(cs) => cs.iter().all(|c| eval_tree(c, truth)),
            ExprTree::Or(cs) => cs.iter().any(|c| eval_tree(c, truth)),
            ExprTree::Leaf(l) => truth.get(l).copied().unwrap_or(false),
        }
    }

    fn eval_dnf(dnf: &[BTreeSet<Leaf>], truth: &BTreeMap<Leaf, bool>) -> bool {
        dnf.iter()
            .any(|d| d.iter().all(|l| truth.get(l).copied().unwrap_or(false)))
    }

    fn arb_tree() -> impl proptest::strategy::Strategy<Value = ExprTree> {
        use proptest::prelude::*;
        let leaf = (0u8..6).prop_map(|i| ExprTree::Leaf(Leaf::TransitionRef(format!("t{i}"))));
        leaf.prop_recursive(3, 12, 4, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 1..4).prop_map(ExprTree::And),
                proptest::collection::vec(inner, 1..4).prop_map(ExprTree::Or),
            ]
        })
    }

    proptest::proptest! {
        #[test]
        fn dnf_preserves_truth_tables(tree in arb_tree()) {
            let dnf = to_dnf(&tree);
            for mask in 0u32..64 {
                let truth: BTreeMap<Leaf, bool> = (0..6)
                    .map(|i| (Leaf::TransitionRef(format!("t{i}")), mask & (1 << i) != 0))
                    .collect();
                proptest::prop_assert_eq!(eval_tree(&tree, &truth), eval_dnf(&dnf, &truth));
            }
        }
    }
}
