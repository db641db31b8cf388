use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self(value)
            }
        }
    };
}

string_id!(
    /// Identifier of any analytic object (code, family, theme, memo, comment).
    ObjectId
);
string_id!(
    /// Content-derived identifier of an ingested transcript.
    TranscriptId
);
string_id!(SessionId);
string_id!(
    /// Researcher (or UI client) identity attached to human actions.
    ActorId
);

/// Kinds of object that draw ids from a session's shared counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Verbatim,
    Gerund,
    Family,
    Theme,
    Memo,
    Comment,
    Action,
}

impl ObjectKind {
    fn prefix(self) -> &'static str {
        match self {
            ObjectKind::Verbatim => "vc",
            ObjectKind::Gerund => "gc",
            ObjectKind::Family => "fam",
            ObjectKind::Theme => "th",
            ObjectKind::Memo => "memo",
            ObjectKind::Comment => "cm",
            ObjectKind::Action => "act",
        }
    }
}

/// Monotonic id source owned by a session.
///
/// Ids are `<prefix>-<counter>` with a six digit counter shared by all kinds,
/// so the numeric part doubles as a global creation order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdGen {
    next: u64,
}

impl IdGen {
    pub fn next(&mut self, kind: ObjectKind) -> (ObjectId, u64) {
        self.next += 1;
        let seq = self.next;
        (ObjectId(format!("{}-{:06}", kind.prefix(), seq)), seq)
    }

    pub fn issued(&self) -> u64 {
        self.next
    }
}
