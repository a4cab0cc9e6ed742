use std::fmt;

/// Deepest refinement level an [`ElementId`] can encode (two bits per level).
pub const MAX_LEVEL: u8 = 32;

/// Persistent identifier of an element in the refinement tree.
///
/// The id is the macro cell index plus the path of child indices from the
/// macro cell down to the element. The path is stored left-aligned, two bits
/// per level, so the derived ordering (macro index, then path, then level) is
/// exactly the lexicographic order of child paths. Restricted to the leaves of
/// a mesh this is a strict total order: leaves are never prefixes of one another.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementId {
    macro_index: u32,
    path: u64,
    level: u8,
}

impl ElementId {
    pub fn macro_element(macro_index: usize) -> Self {
        Self {
            macro_index: macro_index as u32,
            path: 0,
            level: 0,
        }
    }

    pub fn macro_index(self) -> usize {
        self.macro_index as usize
    }

    pub fn level(self) -> u8 {
        self.level
    }

    /// Child `index` (0..4); `None` once the level limit is reached.
    pub fn child(self, index: u8) -> Option<Self> {
        debug_assert!(index < 4);
        if self.level >= MAX_LEVEL {
            return None;
        }
        let shift = 62 - 2 * u32::from(self.level);
        Some(Self {
            macro_index: self.macro_index,
            path: self.path | (u64::from(index) << shift),
            level: self.level + 1,
        })
    }

    pub fn children(self) -> Option<[Self; 4]> {
        Some([self.child(0)?, self.child(1)?, self.child(2)?, self.child(3)?])
    }

    pub fn parent(self) -> Option<Self> {
        if self.level == 0 {
            return None;
        }
        let level = self.level - 1;
        let keep = if level == 0 {
            0
        } else {
            !0u64 << (64 - 2 * u32::from(level))
        };
        Some(Self {
            macro_index: self.macro_index,
            path: self.path & keep,
            level,
        })
    }

    /// Position of this element among its siblings.
    pub fn child_index(self) -> Option<u8> {
        if self.level == 0 {
            return None;
        }
        Some(self.digit(self.level - 1))
    }

    fn digit(self, depth: u8) -> u8 {
        ((self.path >> (62 - 2 * u32::from(depth))) & 0b11) as u8
    }

    /// Whether `self` is `other` or one of its descendants.
    pub fn is_descendant_of(self, other: Self) -> bool {
        if self.macro_index != other.macro_index || self.level < other.level {
            return false;
        }
        let mut id = self;
        while id.level > other.level {
            id = id.parent().expect("level > 0");
        }
        id == other
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.macro_index)?;
        if self.level > 0 {
            write!(f, ":")?;
            for d in 0..self.level {
                write!(f, "{}", self.digit(d))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ElementId({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parent_child_round_trip() {
        let root = ElementId::macro_element(7);
        let c = root.child(2).unwrap().child(1).unwrap().child(3).unwrap();
        assert_eq!(c.level(), 3);
        assert_eq!(c.child_index(), Some(3));
        assert_eq!(c.to_string(), "7:213");
        let p = c.parent().unwrap();
        assert_eq!(p, root.child(2).unwrap().child(1).unwrap());
        assert_eq!(p.parent().unwrap().parent().unwrap(), root);
        assert!(c.is_descendant_of(root));
        assert!(!root.is_descendant_of(c));
    }

    #[test]
    fn ordering_is_lexicographic_in_paths() {
        let root = ElementId::macro_element(0);
        let a = root.child(0).unwrap().child(3).unwrap();
        let b = root.child(1).unwrap();
        let c = root.child(1).unwrap().child(0).unwrap();
        let next = ElementId::macro_element(1);
        assert!(a < b);
        assert!(b < c);
        assert!(c < next);
        assert!(root < a);
    }

    #[test]
    fn level_limit() {
        let mut id = ElementId::macro_element(0);
        for _ in 0..MAX_LEVEL {
            id = id.child(3).unwrap();
        }
        assert!(id.child(0).is_none());
        assert_eq!(id.parent().unwrap().level(), MAX_LEVEL - 1);
    }
}
