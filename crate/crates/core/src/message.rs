//! Wire messages of the three protocol families.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::topology::Identity;

/// Protocol colors. `-1` is the fictitious color of the root's virtual
/// parent; palettes only ever hand out non-negative values.
pub type Color = i64;

pub const FICTITIOUS_COLOR: Color = -1;

/// Smallest non-negative color for which `excluded` returns false.
pub fn first_free_color(mut excluded: impl FnMut(Color) -> bool) -> Color {
    (0..).find(|&c| !excluded(c)).expect("unbounded palette")
}

/// Messages that arrive out of band, not over the shared medium.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum External {
    Start,
    New {
        cl: Color,
        delta: usize,
        new_id: Option<Identity>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    /// Sequential tree traversal: hands the token to `dest`.
    ColorSeq {
        dest: Identity,
        sender: Identity,
        sender_cl: Color,
        d1colors: Vec<Color>,
    },
    /// Sequential tree traversal: subtree of `id` is colored. Also carries
    /// the largest degree seen in that subtree.
    TermSeq {
        dest: Identity,
        id: Identity,
        sender_cl: Color,
        max_d: usize,
    },
    /// Parallel traversal: colors for every child of `sender`.
    ColorPar {
        pairs: Vec<(Identity, Color)>,
        sender: Identity,
        sender_cl: Color,
        nb_cl_parent: usize,
    },
    TermPar {
        dest: Identity,
        id: Identity,
        max_nb_cl: usize,
    },
    /// Global termination wave. `parent` is the sender's identity.
    End {
        parent: Identity,
        max_cl: usize,
    },
    New {
        cl: Color,
        delta: usize,
        new_id: Option<Identity>,
    },
    /// Arbitrary-graph traversal: proposes `proposed_color` to `dest`.
    ColorArb {
        dest: Identity,
        sender: Identity,
        sender_cl: Color,
        proposed_color: Color,
        d1colors: Vec<Color>,
    },
    TermArb {
        dest: Identity,
        id: Identity,
        color: Color,
    },
    Correct {
        dest: Identity,
        sender: Identity,
        color: Color,
        d1colors: Vec<Color>,
    },
    /// `None` destinations are the `-1` wildcard.
    CorrectedColor {
        dest1: Option<Identity>,
        dest2: Option<Identity>,
        sender: Identity,
        color: Color,
    },
    ResumeColoring {
        dest: Identity,
        sender: Identity,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Color,
    Term,
    End,
    New,
    Correct,
    CorrectedColor,
    ResumeColoring,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MessageKind::Color => "COLOR",
            MessageKind::Term => "TERM",
            MessageKind::End => "END",
            MessageKind::New => "NEW",
            MessageKind::Correct => "CORRECT",
            MessageKind::CorrectedColor => "CORRECTED_COLOR",
            MessageKind::ResumeColoring => "RESUME_COLORING",
        };
        f.write_str(name)
    }
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::ColorSeq { .. } | Message::ColorPar { .. } | Message::ColorArb { .. } => MessageKind::Color,
            Message::TermSeq { .. } | Message::TermPar { .. } | Message::TermArb { .. } => MessageKind::Term,
            Message::End { .. } => MessageKind::End,
            Message::New { .. } => MessageKind::New,
            Message::Correct { .. } => MessageKind::Correct,
            Message::CorrectedColor { .. } => MessageKind::CorrectedColor,
            Message::ResumeColoring { .. } => MessageKind::ResumeColoring,
        }
    }

    /// Size under the logarithmic accounting model: an identity costs
    /// `log2 n` bits and a color `log2 delta` bits. The fictitious color is a
    /// marker and is not charged. Counts are charged like colors.
    pub fn accounting_bits(&self, n: usize, delta: usize) -> f64 {
        let id = (n.max(1) as f64).log2();
        let cl = (delta.max(1) as f64).log2();
        let colors = |set: &[Color]| set.iter().filter(|&&c| c >= 0).count() as f64 * cl;
        let color = |c: Color| if c >= 0 { cl } else { 0.0 };
        match self {
            Message::ColorSeq {
                sender_cl, d1colors, ..
            } => 2.0 * id + color(*sender_cl) + colors(d1colors),
            Message::TermSeq { sender_cl, .. } => 2.0 * id + color(*sender_cl) + cl,
            Message::ColorPar { pairs, sender_cl, .. } => id + color(*sender_cl) + cl + pairs.len() as f64 * (id + cl),
            Message::TermPar { .. } => 2.0 * id + cl,
            Message::End { .. } => id + cl,
            Message::New { new_id, .. } => 2.0 * cl + if new_id.is_some() { id } else { 0.0 },
            Message::ColorArb {
                sender_cl,
                proposed_color,
                d1colors,
                ..
            } => 2.0 * id + color(*sender_cl) + color(*proposed_color) + colors(d1colors),
            Message::TermArb { color: c, .. } => 2.0 * id + color(*c),
            Message::Correct { color: c, d1colors, .. } => 2.0 * id + color(*c) + colors(d1colors),
            Message::CorrectedColor { color: c, .. } => 3.0 * id + color(*c),
            Message::ResumeColoring { .. } => 2.0 * id,
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn set(colors: &[Color]) -> String {
            let inner: Vec<String> = colors.iter().map(|c| c.to_string()).collect();
            format!("{{{}}}", inner.join(","))
        }
        fn dest(d: &Option<Identity>) -> String {
            d.map_or_else(|| "-1".to_string(), |id| id.to_string())
        }
        match self {
            Message::ColorSeq {
                dest: d,
                sender,
                sender_cl,
                d1colors,
            } => write!(f, "COLOR({d},{sender},{sender_cl},{})", set(d1colors)),
            Message::TermSeq {
                dest: d,
                id,
                sender_cl,
                max_d,
            } => write!(f, "TERM({d},{id},{sender_cl},{max_d})"),
            Message::ColorPar {
                pairs,
                sender,
                sender_cl,
                nb_cl_parent,
            } => {
                let inner: Vec<String> = pairs.iter().map(|(k, c)| format!("<{k},{c}>")).collect();
                write!(f, "COLOR({{{}}},{sender},{sender_cl},{nb_cl_parent})", inner.join(","))
            }
            Message::TermPar { dest: d, id, max_nb_cl } => write!(f, "TERM({d},{id},{max_nb_cl})"),
            Message::End { parent, max_cl } => write!(f, "END({parent},{max_cl})"),
            Message::New { cl, delta, new_id } => write!(f, "NEW({cl},{delta},{})", dest(new_id)),
            Message::ColorArb {
                dest: d,
                sender,
                sender_cl,
                proposed_color,
                d1colors,
            } => write!(f, "CL({d},{sender},{sender_cl},{proposed_color},{})", set(d1colors)),
            Message::TermArb { dest: d, id, color } => write!(f, "TERM({d},{id},{color})"),
            Message::Correct {
                dest: d,
                sender,
                color,
                d1colors,
            } => write!(f, "CR({d},{sender},{color},{})", set(d1colors)),
            Message::CorrectedColor {
                dest1,
                dest2,
                sender,
                color,
            } => write!(f, "CR_CL({},{},{sender},{color})", dest(dest1), dest(dest2)),
            Message::ResumeColoring { dest: d, sender } => write!(f, "RSM_CL({d},{sender})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_tags_are_stable() {
        let m = Message::End {
            parent: Identity(3),
            max_cl: 4,
        };
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"type":"END","parent":3,"max_cl":4}"#
        );
        let c = Message::CorrectedColor {
            dest1: None,
            dest2: None,
            sender: Identity(2),
            color: 3,
        };
        assert_eq!(c.to_string(), "CR_CL(-1,-1,id2,3)");
        assert_eq!(c.kind(), MessageKind::CorrectedColor);
    }

    #[test]
    fn palette_skips_fictitious_and_excluded() {
        assert_eq!(first_free_color(|c| c == FICTITIOUS_COLOR), 0);
        assert_eq!(first_free_color(|c| [0, 1, 3].contains(&c)), 2);
    }

    #[test]
    fn color_seq_bits_within_bound_when_set_small() {
        // n = 16, delta = 4: 2*4 + 4*2 = 16 bits allowed
        let m = Message::ColorSeq {
            dest: Identity(1),
            sender: Identity(2),
            sender_cl: 0,
            d1colors: vec![-1, 1, 2, 3],
        };
        let bound = 2.0 * 16f64.log2() + 4.0 * 4f64.log2();
        assert!(m.accounting_bits(16, 4) <= bound);
    }
}
