//! Finite atomic filtered spaces: a rooted tree of atoms with ranks and
//! scalar masses.
//!
//! Atoms are identified by their position in the tree (path and rank),
//! never by their underlying sets, so an atom with a single child is
//! distinct from that child even though both cover the same leaves. The
//! deepest generation is the leaf level; every function and measure in the
//! crate is a table indexed by those leaves.
//!
//! Atom ids are breadth-first with children in index order, which is also
//! the deterministic ordering used for serialization and reductions.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::{Error, Result};

/// Handle to an atom (cube) of the filtration. Plain index, cheap to copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(pub(crate) usize);

impl Atom {
    /// Index of the atom in breadth-first order.
    pub fn index(self) -> usize {
        self.0
    }
}

/// Branching prescription for [`Filtration::build_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Branching {
    /// Every non-leaf atom has the same number of children.
    Uniform(usize),
    /// `counts[rank][i]` is the child count of the `i`-th atom of that
    /// generation (breadth-first order). Counts of one are allowed and
    /// produce atoms of different ranks coinciding as sets.
    PerAtom(Vec<Vec<usize>>),
}

struct AtomData {
    rank: usize,
    parent: Option<usize>,
    children: Range<usize>,
    leaf_span: Range<usize>,
}

/// A finite rooted tree of atoms with a nonnegative mass on each leaf,
/// aggregated bottom-up. Immutable after construction.
pub struct Filtration {
    depth: usize,
    atoms: Vec<AtomData>,
    /// Atom-id range of each generation, indexed by rank.
    generations: Vec<Range<usize>>,
    /// sigma(Q) per atom.
    mass: Vec<f64>,
    /// sigma of each leaf, indexed by leaf number.
    leaf_mass: Vec<f64>,
}

impl core::fmt::Debug for Filtration {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Filtration")
            .field("depth", &self.depth)
            .field("n_atoms", &self.atoms.len())
            .field("leaf_mass", &self.leaf_mass)
            .finish()
    }
}

impl Filtration {
    /// Build a tree of the given depth with root rank 0, aggregating the
    /// leaf masses bottom-up.
    pub fn build_tree(depth: usize, branching: &Branching, leaf_masses: &[f64]) -> Result<Self> {
        let mut atoms: Vec<AtomData> = vec![AtomData {
            rank: 0,
            parent: None,
            children: 0..0,
            leaf_span: 0..0,
        }];
        let mut generations: Vec<Range<usize>> = vec![0..1];

        for rank in 0..depth {
            let gen = generations[rank].clone();
            let next_start = atoms.len();
            for (i, id) in gen.clone().enumerate() {
                let count = match branching {
                    Branching::Uniform(k) => *k,
                    Branching::PerAtom(rows) => *rows
                        .get(rank)
                        .and_then(|row| row.get(i))
                        .ok_or(Error::BadBranching)?,
                };
                if count == 0 {
                    return Err(Error::EmptyBranching);
                }
                let first = atoms.len();
                for _ in 0..count {
                    atoms.push(AtomData {
                        rank: rank + 1,
                        parent: Some(id),
                        children: 0..0,
                        leaf_span: 0..0,
                    });
                }
                atoms[id].children = first..atoms.len();
            }
            if let Branching::PerAtom(rows) = branching {
                if rows[rank].len() != gen.len() {
                    return Err(Error::BadBranching);
                }
            }
            generations.push(next_start..atoms.len());
        }

        let leaf_gen = generations[depth].clone();
        let n_leaves = leaf_gen.len();
        if leaf_masses.len() != n_leaves {
            return Err(Error::MassCountMismatch {
                got: leaf_masses.len(),
                want: n_leaves,
            });
        }
        for (leaf, &m) in leaf_masses.iter().enumerate() {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::NegativeMass { leaf, mass: m });
            }
        }

        for (i, id) in leaf_gen.clone().enumerate() {
            atoms[id].leaf_span = i..i + 1;
        }
        for rank in (0..depth).rev() {
            for id in generations[rank].clone() {
                let ch = atoms[id].children.clone();
                let lo = atoms[ch.start].leaf_span.start;
                let hi = atoms[ch.end - 1].leaf_span.end;
                atoms[id].leaf_span = lo..hi;
            }
        }

        let mut mass = vec![0.0; atoms.len()];
        for id in (0..atoms.len()).rev() {
            mass[id] = atoms[id]
                .leaf_span
                .clone()
                .map(|l| leaf_masses[l])
                .sum();
        }

        Ok(Filtration {
            depth,
            atoms,
            generations,
            mass,
            leaf_mass: leaf_masses.to_vec(),
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn root(&self) -> Atom {
        Atom(0)
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_mass.len()
    }

    /// All atoms in breadth-first order.
    pub fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        (0..self.atoms.len()).map(Atom)
    }

    /// The atoms of generation `rank`.
    pub fn generation(&self, rank: usize) -> impl Iterator<Item = Atom> + '_ {
        self.generations
            .get(rank)
            .cloned()
            .unwrap_or(0..0)
            .map(Atom)
    }

    pub fn rank(&self, q: Atom) -> usize {
        self.atoms[q.0].rank
    }

    /// sigma(Q), written |Q|.
    pub fn mass(&self, q: Atom) -> f64 {
        self.mass[q.0]
    }

    pub fn is_leaf(&self, q: Atom) -> bool {
        self.atoms[q.0].rank == self.depth
    }

    pub fn parent(&self, q: Atom) -> Option<Atom> {
        self.atoms[q.0].parent.map(Atom)
    }

    pub fn children(&self, q: Atom) -> impl Iterator<Item = Atom> + '_ {
        self.atoms[q.0].children.clone().map(Atom)
    }

    pub fn child_count(&self, q: Atom) -> usize {
        self.atoms[q.0].children.len()
    }

    /// Half-open range of leaf indices covered by `q`.
    pub fn leaf_span(&self, q: Atom) -> Range<usize> {
        self.atoms[q.0].leaf_span.clone()
    }

    /// The leaf atom holding leaf index `i`.
    pub fn leaf_atom(&self, i: usize) -> Atom {
        Atom(self.generations[self.depth].start + i)
    }

    pub fn leaf_sigma(&self, i: usize) -> f64 {
        self.leaf_mass[i]
    }

    pub fn leaf_sigmas(&self) -> &[f64] {
        &self.leaf_mass
    }

    /// Set inclusion of atoms, which by convention also requires
    /// `rk R >= rk Q`; an atom is not contained in its (set-equal) child.
    pub fn contains(&self, q: Atom, r: Atom) -> bool {
        let qs = &self.atoms[q.0].leaf_span;
        let rs = &self.atoms[r.0].leaf_span;
        self.atoms[r.0].rank >= self.atoms[q.0].rank && qs.start <= rs.start && rs.end <= qs.end
    }

    /// `Ch^r Q`: the descendants of `q` exactly `r` generations below it.
    /// `Ch^0 Q = {Q}`.
    pub fn ch_r(&self, q: Atom, r: usize) -> Result<Vec<Atom>> {
        let rank = self.atoms[q.0].rank;
        if rank + r > self.depth {
            return Err(Error::DepthExceeded {
                r,
                remaining: self.depth - rank,
            });
        }
        let mut lo = q.0;
        let mut hi = q.0 + 1;
        for _ in 0..r {
            let first = self.atoms[lo].children.start;
            let last = self.atoms[hi - 1].children.end;
            lo = first;
            hi = last;
        }
        Ok((lo..hi).map(Atom).collect())
    }

    /// The order-`k` ancestor `Q^{(k)}`. Errors when the tree is too
    /// shallow, signalling "truncate at the root" to callers that clamp.
    pub fn ancestor(&self, q: Atom, k: usize) -> Result<Atom> {
        let rank = self.atoms[q.0].rank;
        if k > rank {
            return Err(Error::NoAncestor { k, rank });
        }
        let mut cur = q.0;
        for _ in 0..k {
            cur = self.atoms[cur].parent.expect("non-root atom has a parent");
        }
        Ok(Atom(cur))
    }

    /// Least common ancestor of two atoms.
    pub fn lca(&self, q: Atom, r: Atom) -> Atom {
        let mut a = q.0;
        let mut b = r.0;
        while self.atoms[a].rank > self.atoms[b].rank {
            a = self.atoms[a].parent.expect("deeper atom has a parent");
        }
        while self.atoms[b].rank > self.atoms[a].rank {
            b = self.atoms[b].parent.expect("deeper atom has a parent");
        }
        while a != b {
            a = self.atoms[a].parent.expect("distinct atoms below the root");
            b = self.atoms[b].parent.expect("distinct atoms below the root");
        }
        Atom(a)
    }

    /// Number of edges of the shortest tree path between two atoms. Finite
    /// for every pair, since the tree has a single root.
    pub fn tree_distance(&self, q: Atom, r: Atom) -> usize {
        let s = self.lca(q, r);
        (self.atoms[q.0].rank - self.atoms[s.0].rank) + (self.atoms[r.0].rank - self.atoms[s.0].rank)
    }

    /// Sequence of child indices leading from the root to `q`.
    pub fn path(&self, q: Atom) -> Vec<usize> {
        let mut rev = Vec::new();
        let mut cur = q.0;
        while let Some(p) = self.atoms[cur].parent {
            rev.push(cur - self.atoms[p].children.start);
            cur = p;
        }
        rev.reverse();
        rev
    }

    /// Resolve a child-index path back to an atom.
    pub fn atom_by_path(&self, path: &[usize]) -> Option<Atom> {
        let mut cur = 0usize;
        for &step in path {
            let ch = self.atoms[cur].children.clone();
            cur = ch.start + step;
            if cur >= ch.end {
                return None;
            }
        }
        Some(Atom(cur))
    }

    /// Largest ratio `|Q| / |parent Q|` over non-root atoms with a
    /// positive-mass parent; `None` when no such atom exists. This is the
    /// tightest kappa for which the tree satisfies `|Q| <= kappa |parent|`.
    pub fn tightest_kappa(&self) -> Option<f64> {
        let mut kappa: Option<f64> = None;
        for id in 1..self.atoms.len() {
            let p = self.atoms[id].parent.expect("non-root atom");
            if self.mass[p] > 0.0 {
                let ratio = self.mass[id] / self.mass[p];
                kappa = Some(kappa.map_or(ratio, |k: f64| k.max(ratio)));
            }
        }
        kappa
    }
}
