//! Depth-first token traversal of a tree. One process holds the token at a
//! time, so at most one broadcast happens per round system-wide.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::{Clock, Node, Outbox, Violation};
use crate::message::{first_free_color, Color, External, Message, FICTITIOUS_COLOR};
use crate::proto::{ChildChooser, ChildOrder};
use crate::topology::Identity;
use crate::trace::Snapshot;

pub const WAITING_FOR_COLOR: u8 = 0;
pub const SEND_COLOR: u8 = 1;
pub const WAITING_FOR_TERM: u8 = 2;
pub const SEND_TERM: u8 = 3;
pub const DONE: u8 = 4;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqSnapshot {
    pub state: u8,
    pub color: Option<Color>,
    pub parent: Option<Identity>,
    pub sender_cl: Option<Color>,
    pub d1colors: Vec<Color>,
    pub to_color: Vec<Identity>,
    pub max_d: usize,
    pub claimed: bool,
}

#[derive(Debug, Clone)]
pub struct SeqNode {
    id: Identity,
    neighbors: BTreeSet<Identity>,
    state: u8,
    parent: Option<Identity>,
    sender_cl: Option<Color>,
    d1colors: BTreeSet<Color>,
    to_color: BTreeSet<Identity>,
    color: Option<Color>,
    max_d: usize,
    claimed: bool,
    chooser: ChildChooser,
}

impl SeqNode {
    pub fn new(id: Identity, neighbors: BTreeSet<Identity>, order: ChildOrder, pinned: Vec<Identity>) -> Self {
        SeqNode {
            id,
            max_d: neighbors.len(),
            to_color: neighbors.clone(),
            neighbors,
            state: WAITING_FOR_COLOR,
            parent: None,
            sender_cl: None,
            d1colors: BTreeSet::new(),
            color: None,
            claimed: false,
            chooser: ChildChooser::new(order, id, pinned),
        }
    }

    pub fn state(&self) -> u8 {
        self.state
    }

    pub fn color(&self) -> Option<Color> {
        self.color
    }

    pub fn max_d(&self) -> usize {
        self.max_d
    }

    fn take_color(&mut self, sender: Identity, sender_cl: Color, d1colors: &[Color]) -> Result<(), Violation> {
        if self.color.is_some() {
            return Err(Violation::new(format!(
                "{} received a second COLOR addressed to it (from {sender})",
                self.id
            )));
        }
        self.parent = Some(sender);
        self.sender_cl = Some(sender_cl);
        self.d1colors = BTreeSet::from([sender_cl]);
        let color = first_free_color(|c| c == sender_cl || d1colors.contains(&c));
        self.color = Some(color);
        self.to_color = self.neighbors.iter().copied().filter(|&k| k != sender).collect();
        self.state = if self.to_color.is_empty() {
            SEND_TERM
        } else {
            SEND_COLOR
        };
        Ok(())
    }
}

impl Node for SeqNode {
    fn on_external(&mut self, message: &External, _clock: Clock) -> Result<(), Violation> {
        match message {
            External::Start => self.take_color(self.id, FICTITIOUS_COLOR, &[]),
            External::New { .. } => Err(Violation::new("NEW is not part of the sequential protocol")),
        }
    }

    fn on_clock(&mut self, _clock: Clock, out: &mut Outbox) -> Result<(), Violation> {
        match self.state {
            SEND_COLOR => {
                let next = self
                    .chooser
                    .pick(&self.to_color)
                    .ok_or_else(|| Violation::new("state 1 with nothing left to color"))?;
                out.broadcast(Message::ColorSeq {
                    dest: next,
                    sender: self.id,
                    sender_cl: self.color.expect("colored before sending"),
                    d1colors: self.d1colors.iter().copied().collect(),
                });
                self.state = WAITING_FOR_TERM;
            }
            SEND_TERM => {
                let parent = self.parent.expect("colored before sending");
                if parent == self.id {
                    self.claimed = true;
                } else {
                    out.broadcast(Message::TermSeq {
                        dest: parent,
                        id: self.id,
                        sender_cl: self.color.expect("colored before sending"),
                        max_d: self.max_d,
                    });
                }
                self.state = DONE;
            }
            _ => {}
        }
        Ok(())
    }

    fn on_message(&mut self, message: &Message, _clock: Clock) -> Result<(), Violation> {
        match message {
            Message::ColorSeq {
                dest,
                sender,
                sender_cl,
                d1colors,
            } if *dest == self.id => self.take_color(*sender, *sender_cl, d1colors),
            Message::TermSeq {
                dest,
                id,
                sender_cl,
                max_d,
            } if *dest == self.id => {
                if self.state != WAITING_FOR_TERM {
                    return Err(Violation::new(format!("TERM from {id} while in state {}", self.state)));
                }
                self.to_color.remove(id);
                self.d1colors.insert(*sender_cl);
                self.max_d = self.max_d.max(*max_d);
                self.state = if self.to_color.is_empty() {
                    SEND_TERM
                } else {
                    SEND_COLOR
                };
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Seq(SeqSnapshot {
            state: self.state,
            color: self.color,
            parent: self.parent,
            sender_cl: self.sender_cl,
            d1colors: self.d1colors.iter().copied().collect(),
            to_color: self.to_color.iter().copied().collect(),
            max_d: self.max_d,
            claimed: self.claimed,
        })
    }

    fn has_claimed(&self) -> bool {
        self.claimed
    }

    fn is_done(&self) -> bool {
        self.state == DONE
    }

    fn is_idle(&self) -> bool {
        !matches!(self.state, SEND_COLOR | SEND_TERM)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u64, nbrs: &[u64]) -> SeqNode {
        SeqNode::new(
            Identity(id),
            nbrs.iter().copied().map(Identity).collect(),
            ChildOrder::Smallest,
            vec![],
        )
    }

    #[test]
    fn root_takes_color_zero() {
        let mut root = node(1, &[2]);
        root.on_external(&External::Start, 0).unwrap();
        assert_eq!(root.color(), Some(0));
        assert_eq!(root.parent, Some(Identity(1)));
        assert_eq!(root.state(), SEND_COLOR);

        let mut lone = node(1, &[]);
        lone.on_external(&External::Start, 0).unwrap();
        assert_eq!(lone.state(), SEND_TERM);
        let mut out = Outbox::default();
        lone.on_clock(1, &mut out).unwrap();
        assert!(out.is_empty());
        assert!(lone.has_claimed());
        assert_eq!(lone.state(), DONE);
    }

    #[test]
    fn middle_and_leaf_of_path() {
        let mut mid = node(2, &[1, 3]);
        mid.on_message(
            &Message::ColorSeq {
                dest: Identity(2),
                sender: Identity(1),
                sender_cl: 0,
                d1colors: vec![-1],
            },
            1,
        )
        .unwrap();
        assert_eq!(mid.color(), Some(1));
        assert_eq!(mid.state(), SEND_COLOR);

        let mut leaf = node(3, &[2]);
        leaf.on_message(
            &Message::ColorSeq {
                dest: Identity(3),
                sender: Identity(2),
                sender_cl: 1,
                d1colors: vec![0],
            },
            2,
        )
        .unwrap();
        assert_eq!(leaf.color(), Some(2));
        assert_eq!(leaf.state(), SEND_TERM);
        let mut out = Outbox::default();
        leaf.on_clock(3, &mut out).unwrap();
        assert_eq!(
            out.message,
            Some(Message::TermSeq {
                dest: Identity(2),
                id: Identity(3),
                sender_cl: 2,
                max_d: 1
            })
        );
    }

    #[test]
    fn foreign_messages_are_ignored() {
        let mut n = node(3, &[2]);
        let before = n.snapshot();
        n.on_message(
            &Message::ColorSeq {
                dest: Identity(9),
                sender: Identity(2),
                sender_cl: 1,
                d1colors: vec![],
            },
            1,
        )
        .unwrap();
        assert_eq!(n.snapshot(), before);
    }

    #[test]
    fn second_addressed_color_is_a_violation() {
        let mut n = node(3, &[2]);
        let m = Message::ColorSeq {
            dest: Identity(3),
            sender: Identity(2),
            sender_cl: 1,
            d1colors: vec![],
        };
        n.on_message(&m, 1).unwrap();
        assert!(n.on_message(&m, 2).is_err());
    }

    #[test]
    fn term_outside_waiting_state_is_a_violation() {
        let mut n = node(2, &[1, 3]);
        let t = Message::TermSeq {
            dest: Identity(2),
            id: Identity(3),
            sender_cl: 2,
            max_d: 1,
        };
        assert!(n.on_message(&t, 1).is_err());
    }

    #[test]
    fn term_folds_degree_and_resumes() {
        let mut n = node(1, &[2, 3]);
        n.on_external(&External::Start, 0).unwrap();
        let mut out = Outbox::default();
        n.on_clock(1, &mut out).unwrap();
        assert_eq!(n.state(), WAITING_FOR_TERM);
        n.on_message(
            &Message::TermSeq {
                dest: Identity(1),
                id: Identity(2),
                sender_cl: 1,
                max_d: 5,
            },
            4,
        )
        .unwrap();
        assert_eq!(n.state(), SEND_COLOR);
        assert_eq!(n.max_d(), 5);
        assert_eq!(n.d1colors, BTreeSet::from([-1, 1]));
    }
}
