//! Parallel tree coloring. A parent picks the colors of all its children at
//! once, and every colored process talks only in the rounds matching its
//! color, so no two processes within distance 2 ever share a round.
//!
//! With the END phase on, TERM messages carry the largest `degree + 1` seen
//! in the subtree; the root then floods `Δ + 1` back down with END. A
//! finished tree can accept new leaves through NEW.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Clock, Node, Outbox, Violation};
use crate::message::{first_free_color, Color, External, Message, FICTITIOUS_COLOR};
use crate::topology::Identity;
use crate::trace::Snapshot;

pub const IDLE: u8 = 0;
pub const SEND_COLOR: u8 = 1;
pub const WAITING_FOR_TERM: u8 = 2;
pub const SEND_TERM: u8 = 3;
pub const LOCALLY_DONE: u8 = 4;
pub const SEND_END: u8 = 5;
pub const GLOBALLY_DONE: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParFlags {
    /// Run the END wave after the root learns of termination.
    pub end_phase: bool,
    /// Forward END on the next round instead of waiting for the color slot.
    pub sibling_end_parallel: bool,
    /// The root broadcasts END even when it has a single neighbor.
    pub root_always_ends: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParSnapshot {
    pub state: u8,
    pub color: Option<Color>,
    pub parent: Option<Identity>,
    pub sender_cl: Option<Color>,
    pub nb_cl_parent: usize,
    pub max_nb_cl: usize,
    pub to_color: Vec<Identity>,
    pub claimed: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JoinRefusal {
    #[error("{id} has degree {degree}, already Δ = {delta}")]
    ParentSaturated { id: Identity, degree: usize, delta: usize },
    #[error("{id} is in state {state}; joins need the END wave to be complete")]
    NotReady { id: Identity, state: u8 },
    #[error("{id} already has a pending join")]
    Busy { id: Identity },
}

#[derive(Debug, Clone)]
pub struct ParNode {
    id: Identity,
    neighbors: BTreeSet<Identity>,
    nb_cl: usize,
    flags: ParFlags,
    state: u8,
    colored: bool,
    parent: Option<Identity>,
    sender_cl: Option<Color>,
    color: Option<Color>,
    nb_cl_parent: usize,
    max_nb_cl: usize,
    to_color: BTreeSet<Identity>,
    child_colors: BTreeMap<Identity, Color>,
    claimed: bool,
    /// Waiting for a NEW that will color it.
    joining: bool,
    pending_new: Option<(Color, Identity)>,
}

impl ParNode {
    pub fn new(id: Identity, neighbors: BTreeSet<Identity>, flags: ParFlags) -> Self {
        let nb_cl = neighbors.len() + 1;
        ParNode {
            id,
            nb_cl,
            flags,
            state: IDLE,
            colored: false,
            parent: None,
            sender_cl: None,
            color: None,
            nb_cl_parent: 0,
            max_nb_cl: nb_cl,
            to_color: neighbors.clone(),
            neighbors,
            child_colors: BTreeMap::new(),
            claimed: false,
            joining: false,
            pending_new: None,
        }
    }

    /// A process outside the tree that will be colored by a NEW message.
    pub fn joiner(id: Identity, parent: Identity, flags: ParFlags) -> Self {
        let mut node = ParNode::new(id, BTreeSet::from([parent]), flags);
        node.joining = true;
        node
    }

    pub fn identity(&self) -> Identity {
        self.id
    }

    pub fn state(&self) -> u8 {
        self.state
    }

    pub fn color(&self) -> Option<Color> {
        self.color
    }

    pub fn max_nb_cl(&self) -> usize {
        self.max_nb_cl
    }

    fn is_root(&self) -> bool {
        self.parent == Some(self.id)
    }

    /// Smallest identity not used by this process or any of its neighbors.
    pub fn fresh_identity(&self) -> Identity {
        (1..)
            .map(Identity)
            .find(|id| *id != self.id && !self.neighbors.contains(id))
            .expect("unbounded range")
    }

    /// Accepts a new leaf child. Returns the color it will receive; the NEW
    /// goes out at this process's next slot.
    pub fn accept_child(&mut self, new_id: Identity) -> Result<Color, JoinRefusal> {
        if self.state != GLOBALLY_DONE || !self.flags.end_phase {
            return Err(JoinRefusal::NotReady {
                id: self.id,
                state: self.state,
            });
        }
        if self.pending_new.is_some() {
            return Err(JoinRefusal::Busy { id: self.id });
        }
        let delta = self.max_nb_cl - 1;
        if self.neighbors.len() >= delta {
            return Err(JoinRefusal::ParentSaturated {
                id: self.id,
                degree: self.neighbors.len(),
                delta,
            });
        }
        let own = self.color.expect("done processes are colored");
        let cl =
            first_free_color(|c| c == own || Some(c) == self.sender_cl || self.child_colors.values().any(|&k| k == c));
        debug_assert!(cl <= delta as Color);
        self.neighbors.insert(new_id);
        self.child_colors.insert(new_id, cl);
        self.pending_new = Some((cl, new_id));
        Ok(cl)
    }

    fn take_color(
        &mut self,
        pairs: &[(Identity, Color)],
        sender: Identity,
        sender_cl: Color,
        nb_cl_parent: usize,
    ) -> Result<(), Violation> {
        if self.colored {
            return Ok(());
        }
        let Some(&(_, color)) = pairs.iter().find(|(k, _)| *k == self.id) else {
            return Err(Violation::new(format!(
                "uncolored {} got COLOR from {sender} without a pair for it",
                self.id
            )));
        };
        self.colored = true;
        self.parent = Some(sender);
        self.to_color = self.neighbors.iter().copied().filter(|&k| k != sender).collect();
        self.sender_cl = Some(sender_cl);
        self.color = Some(color);
        self.nb_cl_parent = nb_cl_parent;
        self.state = if self.to_color.is_empty() {
            SEND_TERM
        } else {
            SEND_COLOR
        };
        Ok(())
    }

    fn adopt(&mut self, cl: Color, delta: usize, new_id: Option<Identity>, clock: Clock) {
        if let Some(id) = new_id {
            self.id = id;
        }
        let parent = *self.neighbors.iter().next().expect("joiner has its parent");
        let modulus = delta + 1;
        self.colored = true;
        self.joining = false;
        self.parent = Some(parent);
        // NEW is sent in the parent's slot, which reveals the parent's color
        self.sender_cl = Some(clock.rem_euclid(modulus as Clock));
        self.color = Some(cl);
        self.nb_cl_parent = modulus;
        self.max_nb_cl = modulus;
        self.to_color.clear();
        self.state = GLOBALLY_DONE;
    }

    fn in_slot(&self, clock: Clock, modulus: usize) -> bool {
        modulus > 0 && Some(clock.rem_euclid(modulus as Clock)) == self.color
    }
}

impl Node for ParNode {
    fn on_external(&mut self, message: &External, clock: Clock) -> Result<(), Violation> {
        match message {
            External::Start => {
                let cl = (clock + 1).rem_euclid(self.nb_cl as Clock);
                self.take_color(&[(self.id, cl)], self.id, FICTITIOUS_COLOR, self.nb_cl)
            }
            External::New { cl, delta, new_id } => {
                if !self.joining {
                    return Err(Violation::new(format!("{} is not waiting to join", self.id)));
                }
                self.adopt(*cl, *delta, *new_id, clock);
                Ok(())
            }
        }
    }

    fn on_clock(&mut self, clock: Clock, out: &mut Outbox) -> Result<(), Violation> {
        match self.state {
            SEND_COLOR | SEND_TERM if self.in_slot(clock, self.nb_cl_parent) => {
                if self.state == SEND_COLOR {
                    let own = self.color.expect("colored");
                    let sender_cl = self.sender_cl.expect("colored");
                    let mut palette = (0..).filter(|&c| c != own && c != sender_cl);
                    let pairs: Vec<(Identity, Color)> = self
                        .to_color
                        .iter()
                        .map(|&k| (k, palette.next().expect("unbounded palette")))
                        .collect();
                    self.child_colors.extend(pairs.iter().copied());
                    out.broadcast(Message::ColorPar {
                        pairs,
                        sender: self.id,
                        sender_cl: own,
                        nb_cl_parent: self.nb_cl,
                    });
                    self.state = WAITING_FOR_TERM;
                } else if self.is_root() {
                    // single-process tree
                    self.claimed = true;
                    self.state = if self.flags.end_phase { SEND_END } else { LOCALLY_DONE };
                } else {
                    out.broadcast(Message::TermPar {
                        dest: self.parent.expect("colored"),
                        id: self.id,
                        max_nb_cl: self.max_nb_cl,
                    });
                    self.state = LOCALLY_DONE;
                }
            }
            SEND_END if self.flags.sibling_end_parallel || self.in_slot(clock, self.max_nb_cl) => {
                let forward = self.neighbors.len() != 1 || (self.is_root() && self.flags.root_always_ends);
                if forward {
                    out.broadcast(Message::End {
                        parent: self.id,
                        max_cl: self.max_nb_cl,
                    });
                }
                self.state = GLOBALLY_DONE;
            }
            GLOBALLY_DONE if self.pending_new.is_some() && self.in_slot(clock, self.max_nb_cl) => {
                let (cl, new_id) = self.pending_new.take().expect("checked");
                out.broadcast(Message::New {
                    cl,
                    delta: self.max_nb_cl - 1,
                    new_id: Some(new_id),
                });
            }
            _ => {}
        }
        Ok(())
    }

    fn on_message(&mut self, message: &Message, clock: Clock) -> Result<(), Violation> {
        match message {
            Message::ColorPar {
                pairs,
                sender,
                sender_cl,
                nb_cl_parent,
            } => self.take_color(pairs, *sender, *sender_cl, *nb_cl_parent),
            Message::TermPar { dest, id, max_nb_cl } if *dest == self.id => {
                if self.state != WAITING_FOR_TERM || !self.to_color.remove(id) {
                    return Err(Violation::new(format!(
                        "unexpected TERM from {id} in state {}",
                        self.state
                    )));
                }
                self.max_nb_cl = self.max_nb_cl.max(*max_nb_cl);
                if self.to_color.is_empty() {
                    if self.is_root() {
                        self.claimed = true;
                        if self.flags.end_phase {
                            self.state = SEND_END;
                        }
                    } else {
                        self.state = SEND_TERM;
                    }
                }
                Ok(())
            }
            Message::End { parent, max_cl } => {
                if Some(*parent) == self.parent && self.state == LOCALLY_DONE && self.flags.end_phase {
                    self.max_nb_cl = self.max_nb_cl.max(*max_cl);
                    self.state = SEND_END;
                }
                Ok(())
            }
            Message::New { cl, delta, new_id } if self.joining => {
                self.adopt(*cl, *delta, *new_id, clock);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Par(ParSnapshot {
            state: self.state,
            color: self.color,
            parent: self.parent,
            sender_cl: self.sender_cl,
            nb_cl_parent: self.nb_cl_parent,
            max_nb_cl: self.max_nb_cl,
            to_color: self.to_color.iter().copied().collect(),
            claimed: self.claimed,
        })
    }

    fn has_claimed(&self) -> bool {
        self.claimed
    }

    fn is_done(&self) -> bool {
        if self.flags.end_phase {
            self.state == GLOBALLY_DONE && self.pending_new.is_none()
        } else {
            self.state == LOCALLY_DONE || self.claimed
        }
    }

    fn is_idle(&self) -> bool {
        match self.state {
            SEND_COLOR | SEND_TERM | SEND_END => false,
            GLOBALLY_DONE => self.pending_new.is_none(),
            _ => true,
        }
    }
}
