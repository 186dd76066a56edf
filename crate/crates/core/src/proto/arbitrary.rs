//! Sequential coloring of an arbitrary connected graph.
//!
//! The token walks the graph like the tree traversal, proposing a color to
//! each newly visited neighbor. A neighbor that sees the proposal clash with
//! what it already knows refuses it, picks its own color and starts a
//! correction round trip before the traversal resumes.
//!
//! Knowledge sets keep `(color, origin)` entries in insertion order: the
//! correction path rolls back the most recent entry, and the refusal test
//! needs to know who a remembered color came from.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::{Clock, Node, Outbox, Violation};
use crate::message::{first_free_color, Color, External, Message};
use crate::proto::{ChildChooser, ChildOrder};
use crate::topology::Identity;
use crate::trace::Snapshot;

pub const IDLE: u8 = 0;
pub const REFUSE: u8 = 1;
pub const PROPOSE: u8 = 2;
pub const SEND_TERM: u8 = 3;
pub const SEND_CORRECTED: u8 = 4;
pub const SEND_RESUME: u8 = 5;
pub const FORWARD_CORRECTED: u8 = 6;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbSnapshot {
    pub state: u8,
    pub color: Option<Color>,
    pub parent: Option<Identity>,
    pub sender: Option<Identity>,
    pub d1colors: Vec<Color>,
    pub d2colors: Vec<Color>,
    pub to_color: Vec<Identity>,
    pub corrected_cl: Option<Color>,
    pub claimed: bool,
}

/// Insertion-ordered color knowledge with per-entry origin.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Knowledge(Vec<(Color, Identity)>);

impl Knowledge {
    fn add(&mut self, color: Color, origin: Identity) {
        if !self.0.contains(&(color, origin)) {
            self.0.push((color, origin));
        }
    }

    fn contains(&self, color: Color) -> bool {
        self.0.iter().any(|(c, _)| *c == color)
    }

    fn contains_from_other(&self, color: Color, origin: Identity) -> bool {
        self.0.iter().any(|(c, o)| *c == color && *o != origin)
    }

    fn drop_last(&mut self) -> Option<(Color, Identity)> {
        self.0.pop()
    }

    /// Distinct colors in first-seen order.
    fn colors(&self) -> Vec<Color> {
        let mut out: Vec<Color> = Vec::new();
        for (c, _) in &self.0 {
            if !out.contains(c) {
                out.push(*c);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ArbNode {
    id: Identity,
    state: u8,
    d1: Knowledge,
    d2: Knowledge,
    sender: Option<Identity>,
    parent: Option<Identity>,
    to_color: BTreeSet<Identity>,
    color: Option<Color>,
    corrected_cl: Option<Color>,
    claimed: bool,
    chooser: ChildChooser,
    literal_refusal: bool,
}

impl ArbNode {
    pub fn new(id: Identity, neighbors: BTreeSet<Identity>, order: ChildOrder, pinned: Vec<Identity>) -> Self {
        ArbNode {
            id,
            state: IDLE,
            d1: Knowledge::default(),
            d2: Knowledge::default(),
            sender: None,
            parent: None,
            to_color: neighbors,
            color: None,
            corrected_cl: None,
            claimed: false,
            chooser: ChildChooser::new(order, id, pinned),
            literal_refusal: false,
        }
    }

    /// Refuse whenever the sender's color is already known, even if the
    /// sender itself is where that knowledge came from.
    pub fn with_literal_refusal(mut self, on: bool) -> Self {
        self.literal_refusal = on;
        self
    }

    pub fn state(&self) -> u8 {
        self.state
    }

    pub fn color(&self) -> Option<Color> {
        self.color
    }

    fn known(&self, c: Color) -> bool {
        self.d1.contains(c) || self.d2.contains(c)
    }

    fn on_color(&mut self, dest: Identity, sender: Identity, sender_cl: Color, proposed: Color, d1colors: &[Color]) {
        self.to_color.remove(&sender);
        for &c in d1colors {
            self.d2.add(c, sender);
        }
        if dest == self.id {
            let sender_color_known = if self.literal_refusal {
                self.d1.contains(sender_cl)
            } else {
                self.d1.contains_from_other(sender_cl, sender)
            };
            if sender_color_known || self.known(proposed) {
                self.state = REFUSE;
                self.sender = Some(sender);
            } else if !self.to_color.is_empty() {
                self.state = PROPOSE;
                self.color = Some(proposed);
                self.parent = Some(sender);
                self.d1.add(sender_cl, sender);
            } else {
                self.state = SEND_TERM;
                self.parent = Some(sender);
                self.color = Some(proposed);
            }
        } else {
            self.d2.add(proposed, dest);
            self.d1.add(sender_cl, sender);
        }
    }
}

fn need<T>(value: Option<T>, what: &str) -> Result<T, Violation> {
    value.ok_or_else(|| Violation::new(format!("missing {what}")))
}

impl Node for ArbNode {
    fn on_external(&mut self, message: &External, _clock: Clock) -> Result<(), Violation> {
        match message {
            External::Start => {
                self.on_color(self.id, self.id, -1, 0, &[]);
                Ok(())
            }
            External::New { .. } => Err(Violation::new("NEW is not part of the arbitrary-graph protocol")),
        }
    }

    fn on_clock(&mut self, _clock: Clock, out: &mut Outbox) -> Result<(), Violation> {
        match self.state {
            REFUSE => {
                let color = first_free_color(|c| self.known(c));
                self.color = Some(color);
                out.broadcast(Message::Correct {
                    dest: need(self.sender, "sender on refusal")?,
                    sender: self.id,
                    color,
                    d1colors: self.d1.colors(),
                });
            }
            PROPOSE => {
                let own = need(self.color, "color before proposing")?;
                let for_child = first_free_color(|c| c == own || self.d1.contains(c));
                let next = self
                    .chooser
                    .pick(&self.to_color)
                    .ok_or_else(|| Violation::new("nothing left to color"))?;
                out.broadcast(Message::ColorArb {
                    dest: next,
                    sender: self.id,
                    sender_cl: own,
                    proposed_color: for_child,
                    d1colors: self.d1.colors(),
                });
            }
            SEND_TERM => {
                let parent = need(self.parent, "parent before TERM")?;
                if parent == self.id {
                    self.claimed = true;
                } else {
                    out.broadcast(Message::TermArb {
                        dest: parent,
                        id: self.id,
                        color: need(self.color, "color before TERM")?,
                    });
                }
            }
            SEND_CORRECTED => out.broadcast(Message::CorrectedColor {
                dest1: self.sender,
                dest2: self.parent,
                sender: self.id,
                color: need(self.color, "color after CORRECT")?,
            }),
            // a bystander woken by the wildcard still holds the initial
            // sender_i = 0, so its RESUME reaches nobody
            SEND_RESUME => out.broadcast(Message::ResumeColoring {
                dest: self.sender.unwrap_or(Identity(0)),
                sender: self.id,
            }),
            FORWARD_CORRECTED => out.broadcast(Message::CorrectedColor {
                dest1: None,
                dest2: None,
                sender: self.id,
                color: need(self.corrected_cl, "corrected_cl in state 6")?,
            }),
            _ => return Ok(()),
        }
        self.state = IDLE;
        Ok(())
    }

    fn on_message(&mut self, message: &Message, _clock: Clock) -> Result<(), Violation> {
        match message {
            Message::ColorArb {
                dest,
                sender,
                sender_cl,
                proposed_color,
                d1colors,
            } => self.on_color(*dest, *sender, *sender_cl, *proposed_color, d1colors),
            Message::TermArb { dest, id, color } => {
                // overheard TERMs still mark `id` as colored
                self.to_color.remove(id);
                if *dest != self.id {
                    return Ok(());
                }
                if self.to_color.is_empty() {
                    if self.parent == Some(self.id) {
                        self.claimed = true;
                    } else {
                        self.state = SEND_TERM;
                    }
                } else {
                    self.d1.add(*color, *id);
                    self.state = PROPOSE;
                }
            }
            Message::Correct {
                dest,
                sender,
                color,
                d1colors,
            } if *dest == self.id => {
                for &c in d1colors {
                    self.d2.add(c, *sender);
                }
                self.d1.add(*color, *sender);
                self.color = Some(first_free_color(|c| self.known(c)));
                self.sender = Some(*sender);
                self.state = SEND_CORRECTED;
            }
            Message::CorrectedColor {
                dest1,
                dest2,
                sender,
                color,
            } => {
                if *dest1 != Some(self.id) {
                    let set = if dest1.is_some() { &mut self.d1 } else { &mut self.d2 };
                    if set.drop_last().is_none() {
                        return Err(Violation::new(format!(
                            "{} has nothing to roll back for CORRECTED_COLOR from {sender}",
                            self.id
                        )));
                    }
                    set.add(*color, *sender);
                }
                if *dest2 == Some(self.id) {
                    self.state = FORWARD_CORRECTED;
                    self.corrected_cl = Some(*color);
                }
                if dest1.is_none() && dest2.is_none() && self.color == Some(*color) {
                    self.state = SEND_RESUME;
                }
            }
            Message::ResumeColoring { dest, sender } if *dest == self.id => {
                self.parent = Some(*sender);
                self.state = if self.to_color.is_empty() { SEND_TERM } else { PROPOSE };
            }
            _ => {}
        }
        Ok(())
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Arb(ArbSnapshot {
            state: self.state,
            color: self.color,
            parent: self.parent,
            sender: self.sender,
            d1colors: self.d1.colors(),
            d2colors: self.d2.colors(),
            to_color: self.to_color.iter().copied().collect(),
            corrected_cl: self.corrected_cl,
            claimed: self.claimed,
        })
    }

    fn has_claimed(&self) -> bool {
        self.claimed
    }

    fn is_done(&self) -> bool {
        self.claimed
    }

    fn is_idle(&self) -> bool {
        self.state == IDLE
    }
}
