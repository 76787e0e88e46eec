//! Seeded generation of synthetic workflow nets for self-checks and benchmarks.
//!
//! Nets are built from a random block structure (sequence, parallel split/join,
//! exclusive choice), which guarantees they are sound free-choice workflow nets
//! by construction. Exclusive choices get mutually exclusive branch conditions
//! over a fresh variable, so every generated net can also be translated to GSM.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::petri::{Arc, PetriNet, Transition};
use crate::translate::BranchConditions;

/// Size limits for [`random_workflow_net`].
#[derive(Debug, Clone)]
pub struct GenOptions {
    /// Upper bound on visible transitions (including parallel split/join pairs).
    pub max_visible: usize,
    /// Upper bound on silent transitions; silent transitions only appear as
    /// choice-branch entries, so the result is acyclic and τ-cycle free.
    pub tau_budget: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            max_visible: 8,
            tau_budget: 2,
        }
    }
}

/// A generated net together with the branch conditions of its choice places.
#[derive(Debug, Clone)]
pub struct GeneratedNet {
    pub net: PetriNet,
    pub conditions: BranchConditions,
}

enum Block {
    Atom,
    Seq(Vec<Block>),
    /// Two parallel branches between a visible split and join transition.
    And(Box<Block>, Box<Block>),
    /// Exclusive branches; the flag marks a silent entry transition.
    Xor(Vec<(bool, Block)>),
}

/// Builds a block using at most `budget` visible transitions (`budget >= 1`).
fn gen_block(rng: &mut ChaCha8Rng, budget: usize, depth: usize, tau_left: &mut usize) -> Block {
    if budget <= 1 || depth >= 3 {
        return Block::Atom;
    }
    match rng.gen_range(0..6) {
        0 | 1 => Block::Atom,
        2 | 3 => {
            let n = if budget >= 3 && rng.gen_bool(0.5) { 3 } else { 2 };
            let mut children = Vec::new();
            let mut left = budget;
            for i in 0..n {
                let reserve = n - i - 1;
                let child_budget = if left > reserve + 1 {
                    rng.gen_range(1..=left - reserve)
                } else {
                    1
                };
                children.push(gen_block(rng, child_budget, depth + 1, tau_left));
                left -= child_budget.min(left - reserve);
            }
            Block::Seq(children)
        }
        4 if budget >= 4 => {
            let rem = budget - 2;
            let b1 = rng.gen_range(1..=rem - 1);
            let left = gen_block(rng, b1, depth + 1, tau_left);
            let right = gen_block(rng, rem - b1, depth + 1, tau_left);
            Block::And(Box::new(left), Box::new(right))
        }
        5 if budget >= 2 => {
            let b1 = rng.gen_range(1..=budget - 1);
            let first = gen_xor_branch(rng, b1, depth, tau_left);
            let second = gen_xor_branch(rng, budget - b1, depth, tau_left);
            Block::Xor(vec![first, second])
        }
        _ => Block::Atom,
    }
}

/// Branch of an exclusive choice. Without a silent entry the branch must start
/// with a transition (never a nested choice place), so the branch condition can
/// be attached to a unique entry arc.
fn gen_xor_branch(
    rng: &mut ChaCha8Rng,
    budget: usize,
    depth: usize,
    tau_left: &mut usize,
) -> (bool, Block) {
    let silent = *tau_left > 0 && rng.gen_bool(0.4);
    if silent {
        *tau_left -= 1;
        return (true, gen_block(rng, budget, depth + 1, tau_left));
    }
    let block = if budget >= 4 && rng.gen_bool(0.25) {
        let rem = budget - 2;
        let b1 = rng.gen_range(1..=rem - 1);
        Block::And(
            Box::new(gen_block(rng, b1, depth + 1, tau_left)),
            Box::new(gen_block(rng, rem - b1, depth + 1, tau_left)),
        )
    } else if budget >= 2 && rng.gen_bool(0.6) {
        Block::Seq(vec![Block::Atom, gen_block(rng, budget - 1, depth + 1, tau_left)])
    } else {
        Block::Atom
    };
    (false, block)
}

struct Wirer {
    places: Vec<String>,
    transitions: Vec<Transition>,
    arcs: Vec<Arc>,
    conditions: BTreeMap<String, String>,
    domains: BTreeMap<String, Vec<String>>,
    next_place: usize,
    next_visible: usize,
    next_silent: usize,
    next_var: usize,
}

impl Wirer {
    fn fresh_place(&mut self) -> String {
        let name = format!("p{}", self.next_place);
        self.next_place += 1;
        self.places.push(name.clone());
        name
    }

    fn fresh_visible(&mut self) -> String {
        let name = format!("t{}", self.next_visible);
        self.next_visible += 1;
        self.transitions.push(Transition::visible(&name));
        name
    }

    fn fresh_silent(&mut self) -> String {
        let name = format!("u{}", self.next_silent);
        self.next_silent += 1;
        self.transitions.push(Transition::silent(&name));
        name
    }

    fn arc(&mut self, from: &str, to: &str) {
        self.arcs.push(Arc {
            from: from.to_string(),
            to: to.to_string(),
        });
    }

    /// Wires `block` between two places and returns the transitions that
    /// consume directly from `entry`.
    fn wire(&mut self, block: &Block, entry: &str, exit: &str) -> Vec<String> {
        match block {
            Block::Atom => {
                let t = self.fresh_visible();
                self.arc(entry, &t);
                self.arc(&t, exit);
                vec![t]
            }
            Block::Seq(children) => {
                let mut heads = Vec::new();
                let mut from = entry.to_string();
                for (i, child) in children.iter().enumerate() {
                    let to = if i + 1 == children.len() {
                        exit.to_string()
                    } else {
                        self.fresh_place()
                    };
                    let child_heads = self.wire(child, &from, &to);
                    if i == 0 {
                        heads = child_heads;
                    }
                    from = to;
                }
                heads
            }
            Block::And(left, right) => {
                let split = self.fresh_visible();
                let join = self.fresh_visible();
                self.arc(entry, &split);
                self.arc(&join, exit);
                for branch in [left.as_ref(), right.as_ref()] {
                    let b_in = self.fresh_place();
                    let b_out = self.fresh_place();
                    self.arc(&split, &b_in);
                    self.arc(&b_out, &join);
                    self.wire(branch, &b_in, &b_out);
                }
                vec![split]
            }
            Block::Xor(branches) => {
                let var = format!("v{}", self.next_var);
                self.next_var += 1;
                let values: Vec<String> = (0..branches.len()).map(|i| format!("c{i}")).collect();
                self.domains.insert(var.clone(), values.clone());
                let mut heads = Vec::new();
                for ((silent, inner), value) in branches.iter().zip(&values) {
                    let branch_heads = if *silent {
                        let tau = self.fresh_silent();
                        let after = self.fresh_place();
                        self.arc(entry, &tau);
                        self.arc(&tau, &after);
                        self.wire(inner, &after, exit);
                        vec![tau]
                    } else {
                        self.wire(inner, entry, exit)
                    };
                    for head in &branch_heads {
                        self.conditions
                            .insert(format!("{entry} -> {head}"), format!("{var} = {value}"));
                    }
                    heads.extend(branch_heads);
                }
                heads
            }
        }
    }
}

/// Generates a random sound free-choice workflow net with exclusive-choice
/// branch conditions, deterministically from `seed`.
pub fn random_workflow_net(seed: u64, options: &GenOptions) -> GeneratedNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = rng.gen_range(3..=options.max_visible.max(3));
    let mut tau_left = options.tau_budget;
    let root = gen_block(&mut rng, budget, 0, &mut tau_left);

    let mut wirer = Wirer {
        places: vec!["start".to_string(), "end".to_string()],
        transitions: Vec::new(),
        arcs: Vec::new(),
        conditions: BTreeMap::new(),
        domains: BTreeMap::new(),
        next_place: 0,
        next_visible: 0,
        next_silent: 0,
        next_var: 0,
    };
    wirer.wire(&root, "start", "end");

    let net = PetriNet {
        places: wirer.places,
        transitions: wirer.transitions,
        arcs: wirer.arcs,
        initial: Some("start".to_string()),
        final_place: Some("end".to_string()),
    };
    let conditions = BranchConditions {
        conditions: wirer.conditions,
        domains: wirer.domains,
    };
    GeneratedNet { net, conditions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::petri::{is_free_choice, is_sound, is_workflow_net, Soundness};

    #[test]
    fn generated_nets_are_sound_free_choice_workflow_nets() {
        for seed in 0..40 {
            let g = random_workflow_net(seed, &GenOptions::default());
            g.net.validate().unwrap();
            assert!(is_workflow_net(&g.net).ok, "seed {seed} not a workflow net");
            assert!(is_free_choice(&g.net).ok, "seed {seed} not free-choice");
            assert_eq!(
                is_sound(&g.net, 100_000).unwrap(),
                Soundness::Sound,
                "seed {seed} not sound"
            );
        }
    }

    #[test]
    fn respects_size_limits() {
        for seed in 0..40 {
            let opts = GenOptions {
                max_visible: 8,
                tau_budget: 2,
            };
            let g = random_workflow_net(seed, &opts);
            let visible = g.net.transitions.iter().filter(|t| t.visible).count();
            let silent = g.net.transitions.len() - visible;
            assert!(visible <= 8, "seed {seed} has {visible} visible transitions");
            assert!(silent <= 2, "seed {seed} has {silent} silent transitions");
        }
    }

    #[test]
    fn tau_free_mode_yields_no_silent_transitions() {
        for seed in 0..40 {
            let opts = GenOptions {
                max_visible: 8,
                tau_budget: 0,
            };
            let g = random_workflow_net(seed, &opts);
            assert!(g.net.transitions.iter().all(|t| t.visible));
        }
    }

    #[test]
    fn conditions_cover_every_choice_arc() {
        for seed in 0..40 {
            let g = random_workflow_net(seed, &GenOptions::default());
            let idx = g.net.index();
            let parsed = g.conditions.parsed().unwrap();
            for place in &g.net.places {
                let consumers = idx.post_p.get(place.as_str()).cloned().unwrap_or_default();
                if consumers.len() > 1 {
                    for t in consumers {
                        assert!(
                            parsed.contains_key(&(place.clone(), t.to_string())),
                            "seed {seed}: missing condition on {place} -> {t}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn same_seed_reproduces_the_same_net() {
        let a = random_workflow_net(7, &GenOptions::default());
        let b = random_workflow_net(7, &GenOptions::default());
        assert_eq!(a.net, b.net);
        assert_eq!(a.conditions.conditions, b.conditions.conditions);
    }
}
