//! Trie over sorted bases.
//!
//! Roots hold the first base symbol, each child the next one, and every
//! complete path of length `n_b` ends in a leaf carrying the base pointer.
//! Nodes live in an arena and children form a sibling list kept sorted by
//! symbol, so iteration and serialization order are deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{decode, param, Error, Result};
use crate::instrument::OpCount;

/// Auto-incremented handle of a distinct base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasePointer(pub u64);

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    symbol: u8,
    parent: u32,
    first_child: u32,
    next_sibling: u32,
    /// Index into `leaves`, or `NONE`.
    leaf: u32,
}

/// Node visits of the last search or insert, for complexity checks.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Touches {
    /// Nodes on the descent path.
    pub path: u64,
    /// Sibling entries compared while choosing a child.
    pub siblings: u64,
}

#[derive(Debug, Clone)]
pub struct BaseForest {
    nodes: Vec<Node>,
    first_root: u32,
    root_count: usize,
    /// `leaves[p]` is the leaf node of pointer `p`.
    leaves: Vec<u32>,
    last_touches: Touches,
}

impl Default for BaseForest {
    fn default() -> Self {
        Self::new()
    }
}

impl BaseForest {
    pub fn new() -> Self {
        BaseForest {
            nodes: Vec::new(),
            first_root: NONE,
            root_count: 0,
            leaves: Vec::new(),
            last_touches: Touches::default(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn root_count(&self) -> usize {
        self.root_count
    }

    /// Node visits of the most recent insert.
    pub fn last_touches(&self) -> Touches {
        self.last_touches
    }

    fn check_sorted(base: &[u8]) -> Result<()> {
        if base.is_empty() {
            return Err(param("empty base"));
        }
        if base.windows(2).any(|w| w[0] > w[1]) {
            return Err(param("base is not sorted"));
        }
        Ok(())
    }

    /// Finds the child of `parent` (or a root if `parent == NONE`) with
    /// `symbol`; returns `(found, predecessor)` where the predecessor is the
    /// last sibling with a smaller symbol.
    fn find_child(&self, parent: u32, symbol: u8, touches: &mut Touches) -> (u32, u32) {
        let mut cur = if parent == NONE { self.first_root } else { self.nodes[parent as usize].first_child };
        let mut prev = NONE;
        while cur != NONE {
            touches.siblings += 1;
            let node = &self.nodes[cur as usize];
            if node.symbol == symbol {
                return (cur, prev);
            }
            if node.symbol > symbol {
                break;
            }
            prev = cur;
            cur = node.next_sibling;
        }
        (NONE, prev)
    }

    /// Looks up a base; returns its pointer if it was inserted before.
    pub fn search(&self, base: &[u8]) -> Result<Option<BasePointer>> {
        self.search_traced(base).map(|(p, _)| p)
    }

    /// [`search`](Self::search) that also reports the nodes it visited.
    pub fn search_traced(&self, base: &[u8]) -> Result<(Option<BasePointer>, Touches)> {
        Self::check_sorted(base)?;
        let mut touches = Touches::default();
        let mut node = NONE;
        for &s in base {
            let (child, _) = self.find_child(node, s, &mut touches);
            if child == NONE {
                return Ok((None, touches));
            }
            touches.path += 1;
            node = child;
        }
        let leaf = self.nodes[node as usize].leaf;
        Ok(((leaf != NONE).then_some(BasePointer(u64::from(leaf))), touches))
    }

    /// Inserts a base if absent. Returns its pointer and whether it was new.
    pub fn insert(&mut self, base: &[u8]) -> Result<(BasePointer, bool)> {
        let mut ops = OpCount::default();
        self.insert_counted(base, &mut ops)
    }

    pub fn insert_counted(&mut self, base: &[u8], ops: &mut OpCount) -> Result<(BasePointer, bool)> {
        Self::check_sorted(base)?;
        let mut touches = Touches::default();
        let mut node = NONE;
        for &s in base {
            let (child, prev) = self.find_child(node, s, &mut touches);
            node = if child != NONE {
                child
            } else {
                self.attach(node, prev, s)?
            };
            touches.path += 1;
        }
        self.last_touches = touches;
        ops.add(touches.path + touches.siblings);
        let leaf = self.nodes[node as usize].leaf;
        if leaf != NONE {
            return Ok((BasePointer(u64::from(leaf)), false));
        }
        let pointer = self.leaves.len();
        if pointer >= NONE as usize {
            return Err(Error::Internal("pointer space exhausted".into()));
        }
        self.nodes[node as usize].leaf = pointer as u32;
        self.leaves.push(node);
        Ok((BasePointer(pointer as u64), true))
    }

    fn attach(&mut self, parent: u32, prev: u32, symbol: u8) -> Result<u32> {
        let idx = self.nodes.len();
        if idx >= NONE as usize {
            return Err(Error::Internal("node arena exhausted".into()));
        }
        let idx = idx as u32;
        let next = if prev != NONE {
            self.nodes[prev as usize].next_sibling
        } else if parent == NONE {
            self.first_root
        } else {
            self.nodes[parent as usize].first_child
        };
        self.nodes.push(Node { symbol, parent, first_child: NONE, next_sibling: next, leaf: NONE });
        if prev != NONE {
            self.nodes[prev as usize].next_sibling = idx;
        } else if parent == NONE {
            self.first_root = idx;
            self.root_count += 1;
        } else {
            self.nodes[parent as usize].first_child = idx;
        }
        if prev != NONE && parent == NONE {
            self.root_count += 1;
        }
        Ok(idx)
    }

    fn path_of(&self, mut node: u32, ops: &mut OpCount) -> Vec<u8> {
        let mut out = Vec::new();
        while node != NONE {
            let n = &self.nodes[node as usize];
            out.push(n.symbol);
            node = n.parent;
            ops.tick();
        }
        out.reverse();
        out
    }

    /// Returns the base behind `pointer` by walking up from its leaf.
    pub fn get_base(&self, pointer: BasePointer) -> Result<Vec<u8>> {
        let mut ops = OpCount::default();
        self.get_base_counted(pointer, &mut ops)
    }

    pub fn get_base_counted(&self, pointer: BasePointer, ops: &mut OpCount) -> Result<Vec<u8>> {
        let leaf = usize::try_from(pointer.0)
            .ok()
            .and_then(|p| self.leaves.get(p))
            .ok_or_else(|| Error::NotFound(format!("base pointer {}", pointer.0)))?;
        Ok(self.path_of(*leaf, ops))
    }

    /// Same result as [`get_base`](Self::get_base), but finds the leaf by
    /// scanning every stored leaf instead of the pointer index.
    pub fn get_base_by_scan(&self, pointer: BasePointer, ops: &mut OpCount) -> Result<Vec<u8>> {
        for &leaf in &self.leaves {
            ops.tick();
            if u64::from(self.nodes[leaf as usize].leaf) == pointer.0 {
                return Ok(self.path_of(leaf, ops));
            }
        }
        Err(Error::NotFound(format!("base pointer {}", pointer.0)))
    }

    /// Storage model: each node costs its Bid plus 8 structural bits, each
    /// leaf one pointer.
    pub fn size_bits(&self, bid_width: u32, pointer_bits: u32) -> u64 {
        self.nodes.len() as u64 * u64::from(bid_width + 8) + self.leaves.len() as u64 * u64::from(pointer_bits)
    }

    /// Preorder snapshot: `root_count u8`, then per node `symbol u8,
    /// child_count u8, has_leaf u8 [, pointer u64 LE]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.nodes.len() * 3 + self.leaves.len() * 8 + 1);
        out.push(self.root_count as u8);
        let mut stack: Vec<u32> = self.children(NONE).into_iter().rev().collect();
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            let kids = self.children(n);
            out.push(node.symbol);
            out.push(kids.len() as u8);
            if node.leaf == NONE {
                out.push(0);
            } else {
                out.push(1);
                out.extend_from_slice(&u64::from(node.leaf).to_le_bytes());
            }
            stack.extend(kids.into_iter().rev());
        }
        out
    }

    fn children(&self, parent: u32) -> Vec<u32> {
        let mut cur = if parent == NONE { self.first_root } else { self.nodes[parent as usize].first_child };
        let mut out = Vec::new();
        while cur != NONE {
            out.push(cur);
            cur = self.nodes[cur as usize].next_sibling;
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut forest = BaseForest::new();
        let (&roots, mut rest) = bytes.split_first().ok_or_else(|| decode("empty forest snapshot"))?;
        let mut leaf_slots: Vec<(u64, u32)> = Vec::new();
        // Stack of (parent, remaining children, last attached child).
        let mut stack: Vec<(u32, usize, u32)> = vec![(NONE, usize::from(roots), NONE)];
        while let Some(top) = stack.last_mut() {
            if top.1 == 0 {
                stack.pop();
                continue;
            }
            top.1 -= 1;
            let (parent, prev) = (top.0, top.2);
            if rest.len() < 3 {
                return Err(decode("truncated forest node"));
            }
            let (symbol, kids, has_leaf) = (rest[0], rest[1], rest[2]);
            rest = &rest[3..];
            if prev != NONE && forest.nodes[prev as usize].symbol >= symbol {
                return Err(decode("forest children out of order"));
            }
            if parent != NONE && forest.nodes[parent as usize].symbol > symbol {
                return Err(decode("forest path not sorted"));
            }
            let idx = forest.attach(parent, prev, symbol)?;
            stack.last_mut().unwrap().2 = idx;
            match has_leaf {
                0 => {}
                1 => {
                    if rest.len() < 8 {
                        return Err(decode("truncated leaf pointer"));
                    }
                    let p = u64::from_le_bytes(rest[..8].try_into().unwrap());
                    rest = &rest[8..];
                    leaf_slots.push((p, idx));
                }
                other => return Err(decode(format!("bad leaf flag {other}"))),
            }
            stack.push((idx, usize::from(kids), NONE));
        }
        if !rest.is_empty() {
            return Err(decode("trailing bytes after forest snapshot"));
        }
        leaf_slots.sort_unstable();
        forest.leaves = vec![NONE; leaf_slots.len()];
        for (p, node) in leaf_slots {
            let p = usize::try_from(p).ok().filter(|&p| p < forest.leaves.len() && forest.leaves[p] == NONE);
            let p = p.ok_or_else(|| decode("leaf pointers are not dense"))?;
            forest.leaves[p] = node;
            forest.nodes[node as usize].leaf = p as u32;
        }
        Ok(forest)
    }
}
