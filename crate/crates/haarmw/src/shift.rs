//! Generalized big Haar shift operators: per-atom kernel blocks, their
//! construction from random coefficients, weighted application, adjoints,
//! truncations, and the structural well-localized checker.
//!
//! A shift of complexity `r` is a sum of blocks `T_Q`, one per atom, each
//! an integral operator with a scalar kernel supported on `Q x Q` and
//! constant on the `Ch^{r+1}(Q)` cell grid. Kernels act on vector
//! functions componentwise (`k(x,y) * I_d`). The big-Haar normalization
//! bounds every block kernel by `1/|Q|` in sup norm; annihilating shifts
//! additionally satisfy `T_Q 1_Q = T_Q^* 1_Q = 0` by construction.
//!
//! Blocks live only on atoms deep enough to carry a full `Ch^{r+1}` grid;
//! closer to the leaves the difference projections vanish and the blocks
//! with them.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::filtration::{Atom, Filtration};
use crate::martingale;
use crate::measure::{MatrixMeasure, VecFunction};
use crate::tol;
use crate::{Error, Result};

/// One block `T_Q`: a scalar kernel table on the `Ch^{grid_depth}(Q)` cell
/// grid (rows = output cells, columns = input cells).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlock {
    pub owner: Atom,
    pub grid_depth: usize,
    pub grid: DMatrix<f64>,
}

impl KernelBlock {
    /// Sup norm of the kernel over the grid.
    pub fn sup_norm(&self) -> f64 {
        if self.grid.is_empty() {
            0.0
        } else {
            self.grid.amax()
        }
    }
}

/// Structural flags enforced by the constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftFlags {
    /// Every block kernel satisfies `||K_Q||_inf <= 1/|Q|`.
    pub is_big_haar: bool,
    /// Every block and its adjoint annihilate the constants `1_Q`.
    pub annihilates_constants: bool,
}

/// A finite sum of kernel blocks, at most one per atom.
#[derive(Debug, Clone)]
pub struct ShiftOperator {
    complexity: usize,
    flags: ShiftFlags,
    blocks: Vec<KernelBlock>,
}

/// Witness of a failed well-localized clause.
#[derive(Debug, Clone)]
pub struct WellLocWitness {
    pub q: Atom,
    pub r_atom: Atom,
    pub basis: usize,
    /// True when the violation is on the adjoint side.
    pub dual: bool,
    pub residual: f64,
}

/// Outcome of [`ShiftOperator::check_well_localized`].
#[derive(Debug, Clone)]
pub struct WellLocReport {
    pub pass: bool,
    pub max_residual: f64,
    pub checked: usize,
    pub witness: Option<WellLocWitness>,
}

/// Outcome of the shift-invariance check
/// (`Delta^V_R T_W 1_Q e = Delta^V_R T_W 1_S e` for `Q` inside `S`).
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub pass: bool,
    pub max_residual: f64,
    pub checked: usize,
}

impl ShiftOperator {
    /// Assemble an operator from explicit blocks, validating grid shapes.
    pub fn from_blocks(
        f: &Filtration,
        complexity: usize,
        flags: ShiftFlags,
        mut blocks: Vec<KernelBlock>,
    ) -> Result<Self> {
        for b in &blocks {
            let remaining = f.depth() - f.rank(b.owner);
            if b.grid_depth > remaining {
                return Err(Error::DepthExceeded {
                    r: b.grid_depth,
                    remaining,
                });
            }
            let cells = f.ch_r(b.owner, b.grid_depth)?.len();
            if b.grid.nrows() != cells || b.grid.ncols() != cells {
                return Err(Error::DimMismatch {
                    got: b.grid.nrows(),
                    want: cells,
                });
            }
        }
        blocks.sort_by_key(|b| b.owner.index());
        Ok(ShiftOperator {
            complexity,
            flags,
            blocks,
        })
    }

    /// The zero operator of a given complexity.
    pub fn zero(complexity: usize) -> Self {
        ShiftOperator {
            complexity,
            flags: ShiftFlags {
                is_big_haar: true,
                annihilates_constants: true,
            },
            blocks: Vec::new(),
        }
    }

    /// Random big Haar shift of complexity `(m, n)`: per block,
    /// `sum_{R in Ch^n Q, S in Ch^m Q} Delta_R c(R,S) Delta_S` with
    /// coefficients uniform on [-1, 1], rescaled so the kernel sup norm of
    /// every nonzero block equals `1/|Q|`. Annihilates constants on both
    /// sides by construction.
    pub fn make_haar_shift(seed: u64, f: &Filtration, m: usize, n: usize) -> Result<Self> {
        if m > f.depth() || n > f.depth() {
            return Err(Error::ComplexityExceedsDepth {
                m,
                n,
                depth: f.depth(),
            });
        }
        let r = m.max(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::new();
        for q in f.atoms() {
            if f.rank(q) + r + 1 > f.depth() {
                continue;
            }
            let rows = f.ch_r(q, n + 1)?.len();
            let cols = f.ch_r(q, m + 1)?.len();
            let coeffs = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
            let dense = haar_block_dense(f, q, m, n, &coeffs);
            if let Some(b) = extract_block(f, &dense, q, r + 1, 1.0) {
                blocks.push(b);
            }
        }
        ShiftOperator::from_blocks(
            f,
            r,
            ShiftFlags {
                is_big_haar: true,
                annihilates_constants: true,
            },
            blocks,
        )
    }

    /// Random generalized big Haar shift of complexity `(m, n)`: each block
    /// combines the four projection pieces `P^j (.) P^k` with
    /// `P^1 = Delta`, `P^2 = E`, every piece rescaled to kernel sup norm
    /// `1/(4|Q|)` so the aggregate stays within the big-Haar bound.
    pub fn make_generalized_shift(seed: u64, f: &Filtration, m: usize, n: usize) -> Result<Self> {
        if m > f.depth() || n > f.depth() {
            return Err(Error::ComplexityExceedsDepth {
                m,
                n,
                depth: f.depth(),
            });
        }
        let r = m.max(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::new();
        for q in f.atoms() {
            if f.rank(q) + r + 1 > f.depth() {
                continue;
            }
            let rows = f.ch_r(q, n + 1)?.len();
            let cols = f.ch_r(q, m + 1)?.len();
            let mut grid: Option<DMatrix<f64>> = None;
            for j in 1..=2 {
                for k in 1..=2 {
                    let coeffs =
                        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
                    let dense = generalized_piece_dense(f, q, m, n, &coeffs, j, k);
                    if let Some(b) = extract_block(f, &dense, q, r + 1, 0.25) {
                        grid = Some(match grid {
                            Some(g) => g + b.grid,
                            None => b.grid,
                        });
                    }
                }
            }
            if let Some(grid) = grid {
                blocks.push(KernelBlock {
                    owner: q,
                    grid_depth: r + 1,
                    grid,
                });
            }
        }
        ShiftOperator::from_blocks(
            f,
            r,
            ShiftFlags {
                is_big_haar: true,
                annihilates_constants: false,
            },
            blocks,
        )
    }

    pub fn complexity(&self) -> usize {
        self.complexity
    }

    pub fn flags(&self) -> ShiftFlags {
        self.flags
    }

    pub fn blocks(&self) -> &[KernelBlock] {
        &self.blocks
    }

    /// Largest `||K_Q||_inf * |Q|` over blocks; at most 1 for big Haar
    /// shifts. Blocks owned by zero-mass atoms are vacuous and skipped.
    pub fn normalization_ratio(&self, f: &Filtration) -> f64 {
        self.blocks
            .iter()
            .filter(|b| f.mass(b.owner) > 0.0)
            .map(|b| b.sup_norm() * f.mass(b.owner))
            .fold(0.0, f64::max)
    }

    /// The scalar kernel `K(x, y) = sum_Q K_Q(x, y)` as a leaf-by-leaf
    /// table.
    pub fn kernel_matrix(&self, f: &Filtration) -> DMatrix<f64> {
        let n = f.n_leaves();
        let mut out = DMatrix::zeros(n, n);
        for b in &self.blocks {
            let cells = f.ch_r(b.owner, b.grid_depth).expect("validated block");
            for (i, cr) in cells.iter().enumerate() {
                for (j, cs) in cells.iter().enumerate() {
                    let v = b.grid[(i, j)];
                    if v == 0.0 {
                        continue;
                    }
                    for lx in f.leaf_span(*cr) {
                        for ly in f.leaf_span(*cs) {
                            out[(lx, ly)] += v;
                        }
                    }
                }
            }
        }
        out
    }

    /// Dense matrix of the unweighted operator `f -> T(f sigma)` on scalar
    /// leaf tables.
    pub fn dense_sigma(&self, f: &Filtration) -> DMatrix<f64> {
        let mut k = self.kernel_matrix(f);
        for ly in 0..f.n_leaves() {
            let s = f.leaf_sigma(ly);
            for lx in 0..f.n_leaves() {
                k[(lx, ly)] *= s;
            }
        }
        k
    }

    /// Dense matrix of the weighted operator `f -> T(W f)` over the leaf
    /// basis (`n_leaves * d` square).
    pub fn dense_weighted(&self, f: &Filtration, w: &MatrixMeasure) -> DMatrix<f64> {
        let d = w.dim();
        let k = self.kernel_matrix(f);
        let n = f.n_leaves() * d;
        let mut out = DMatrix::zeros(n, n);
        for ly in 0..f.n_leaves() {
            let mass = w.leaf_mass(ly);
            for lx in 0..f.n_leaves() {
                let v = k[(lx, ly)];
                if v == 0.0 {
                    continue;
                }
                for a in 0..d {
                    for bcol in 0..d {
                        out[(lx * d + a, ly * d + bcol)] = v * mass[(a, bcol)];
                    }
                }
            }
        }
        out
    }

    /// Apply the weighted operator directly, block by block in atom order.
    pub fn apply_weighted(
        &self,
        f: &Filtration,
        w: &MatrixMeasure,
        fun: &VecFunction,
    ) -> VecFunction {
        let d = w.dim();
        let mut out = VecFunction::zeros(f, d);
        for b in &self.blocks {
            let cells = f.ch_r(b.owner, b.grid_depth).expect("validated block");
            let moments: Vec<DVector<f64>> = cells
                .iter()
                .map(|&s| {
                    let mut acc = DVector::zeros(d);
                    for l in f.leaf_span(s) {
                        acc += w.leaf_mass(l) * fun.leaf(l);
                    }
                    acc
                })
                .collect();
            for (i, &cr) in cells.iter().enumerate() {
                let mut contrib = DVector::zeros(d);
                for (j, mom) in moments.iter().enumerate() {
                    let v = b.grid[(i, j)];
                    if v != 0.0 {
                        contrib.axpy(v, mom, 1.0);
                    }
                }
                if contrib.amax() != 0.0 {
                    for l in f.leaf_span(cr) {
                        let mut row = out.values_mut().rows_mut(l * d, d);
                        row += &contrib;
                    }
                }
            }
        }
        out
    }

    /// The formal adjoint: every block kernel transposed. A complexity
    /// `(m, n)` shift becomes a complexity `(n, m)` shift.
    pub fn adjoint(&self) -> ShiftOperator {
        ShiftOperator {
            complexity: self.complexity,
            flags: self.flags,
            blocks: self
                .blocks
                .iter()
                .map(|b| KernelBlock {
                    owner: b.owner,
                    grid_depth: b.grid_depth,
                    grid: b.grid.transpose(),
                })
                .collect(),
        }
    }

    /// `T^Q`: the sub-operator keeping the blocks owned by atoms inside
    /// `q` (including `q` itself).
    pub fn truncate_blocks(&self, f: &Filtration, q: Atom) -> ShiftOperator {
        ShiftOperator {
            complexity: self.complexity,
            flags: self.flags,
            blocks: self
                .blocks
                .iter()
                .filter(|b| f.contains(q, b.owner))
                .cloned()
                .collect(),
        }
    }

    /// Dense matrix of the projection truncation `T_W^Q = P^V_Q T_W`,
    /// where `P^V_Q = 1_Q - E^V_Q`.
    pub fn truncate_projection(
        &self,
        f: &Filtration,
        w: &MatrixMeasure,
        v: &MatrixMeasure,
        q: Atom,
    ) -> DMatrix<f64> {
        martingale::dense_complement(f, v, q) * self.dense_weighted(f, w)
    }

    /// Split into `r + 1` operators by owner rank modulo `r + 1`; the
    /// parts sum back to the whole and each is complexity zero with
    /// respect to the rarefied generations.
    pub fn split_by_rank(&self, f: &Filtration) -> Vec<ShiftOperator> {
        let parts = self.complexity + 1;
        let mut out: Vec<ShiftOperator> = (0..parts)
            .map(|_| ShiftOperator {
                complexity: self.complexity,
                flags: self.flags,
                blocks: Vec::new(),
            })
            .collect();
        for b in &self.blocks {
            out[f.rank(b.owner) % parts].blocks.push(b.clone());
        }
        out
    }

    /// Multiply every kernel by a constant, keeping the declared flags.
    /// This deliberately breaks the normalization contract; the harness
    /// uses it to confirm that certificates catch corrupted operators.
    pub fn scaled(&self, factor: f64) -> ShiftOperator {
        ShiftOperator {
            complexity: self.complexity,
            flags: self.flags,
            blocks: self
                .blocks
                .iter()
                .map(|b| KernelBlock {
                    owner: b.owner,
                    grid_depth: b.grid_depth,
                    grid: &b.grid * factor,
                })
                .collect(),
        }
    }

    /// Exhaustive check of the well-localized clauses at radius `r` for
    /// `T_W` and its formal adjoint. For every pair `(Q, R)` and basis
    /// vector `e` covered by a clause, `Delta^V_R T_W 1_Q e` must vanish
    /// in L2(V) (dually in L2(W)).
    ///
    /// Clause (2) compares `R` against the order-`r+1` ancestor of `Q`;
    /// when the tree is too shallow for that ancestor the comparison is
    /// clamped at the root, where it never triggers. The separate
    /// "localized" requirement (vanishing across atoms with no common
    /// ancestor) is vacuous in a single-rooted tree.
    pub fn check_well_localized(
        &self,
        f: &Filtration,
        w: &MatrixMeasure,
        v: &MatrixMeasure,
        r: usize,
    ) -> WellLocReport {
        let d = w.dim();
        let sides = [
            (self.dense_weighted(f, w), v, false),
            (self.adjoint().dense_weighted(f, v), w, true),
        ];
        let mut report = WellLocReport {
            pass: true,
            max_residual: 0.0,
            checked: 0,
            witness: None,
        };
        let atoms: Vec<Atom> = f.atoms().collect();
        for (mat, out_m, dual) in &sides {
            let pinvs = martingale::aggregate_pinvs(f, out_m);
            for &q in &atoms {
                let clamp = f.ancestor(q, r + 1).ok();
                for c in 0..d {
                    let mut e = DVector::zeros(d);
                    e[c] = 1.0;
                    let ind = VecFunction::indicator(f, d, q, &e);
                    let u = VecFunction::from_vector(d, mat * ind.values());
                    let ints = martingale::atom_integrals(f, out_m, &u);
                    let scale = 1.0 + out_m.norm(&u);
                    for &ra in &atoms {
                        let clause1 = !f.contains(q, ra) && f.rank(ra) >= r + f.rank(q);
                        let clause2 = f.rank(ra) + 1 >= f.rank(q)
                            && clamp.is_some_and(|a| !f.contains(a, ra));
                        if !(clause1 || clause2) {
                            continue;
                        }
                        report.checked += 1;
                        let res =
                            martingale::weighted_delta_norm_cached(f, out_m, ra, &ints, &pinvs);
                        let rel = res / scale;
                        if rel > report.max_residual {
                            report.max_residual = rel;
                        }
                        if rel > tol::IDENTITY && report.witness.is_none() {
                            report.pass = false;
                            report.witness = Some(WellLocWitness {
                                q,
                                r_atom: ra,
                                basis: c,
                                dual: *dual,
                                residual: res,
                            });
                        }
                    }
                }
            }
        }
        report
    }

    /// Check `Delta^V_R T_W 1_Q e = Delta^V_R T_W 1_S e` for every atom
    /// `Q` inside `S` and `R in Ch^r(Q)`, with `r` the complexity.
    pub fn check_shift_invariance(
        &self,
        f: &Filtration,
        w: &MatrixMeasure,
        v: &MatrixMeasure,
    ) -> InvarianceReport {
        let d = w.dim();
        let mat = self.dense_weighted(f, w);
        let pinvs = martingale::aggregate_pinvs(f, v);
        let mut report = InvarianceReport {
            pass: true,
            max_residual: 0.0,
            checked: 0,
        };
        for q in f.atoms() {
            if f.rank(q) + self.complexity > f.depth() {
                continue;
            }
            let rs = f.ch_r(q, self.complexity).expect("rank checked");
            for c in 0..d {
                let mut e = DVector::zeros(d);
                e[c] = 1.0;
                let ind_q = VecFunction::indicator(f, d, q, &e);
                let u_q = VecFunction::from_vector(d, &mat * ind_q.values());
                let mut s = q;
                while let Some(parent) = f.parent(s) {
                    s = parent;
                    let ind_s = VecFunction::indicator(f, d, s, &e);
                    let u_s = VecFunction::from_vector(d, &mat * ind_s.values());
                    let mut diff = u_q.clone();
                    *diff.values_mut() -= u_s.values();
                    let ints = martingale::atom_integrals(f, v, &diff);
                    let scale = 1.0 + v.norm(&u_q).max(v.norm(&u_s));
                    for &ra in &rs {
                        report.checked += 1;
                        let res =
                            martingale::weighted_delta_norm_cached(f, v, ra, &ints, &pinvs);
                        let rel = res / scale;
                        report.max_residual = report.max_residual.max(rel);
                        if rel > tol::IDENTITY {
                            report.pass = false;
                        }
                    }
                }
            }
        }
        report
    }
}

/// Dense scalar operator `(sum_{R in Ch^n} Delta_R) K0 (sum_{S in Ch^m}
/// Delta_S)` with `K0` the coefficient kernel, cell-constant one
/// generation below the projections so the compositions survive.
fn haar_block_dense(
    f: &Filtration,
    q: Atom,
    m: usize,
    n: usize,
    coeffs: &DMatrix<f64>,
) -> DMatrix<f64> {
    generalized_piece_dense(f, q, m, n, coeffs, 1, 1)
}

/// Dense scalar operator `(sum P^j_R) K0 (sum P^k_S)` with `P^1 = Delta`
/// and `P^2 = E` over `R in Ch^n(q)`, `S in Ch^m(q)`; the coefficients
/// live on the `Ch^{n+1} x Ch^{m+1}` grid.
fn generalized_piece_dense(
    f: &Filtration,
    q: Atom,
    m: usize,
    n: usize,
    coeffs: &DMatrix<f64>,
    j: usize,
    k: usize,
) -> DMatrix<f64> {
    let grid_out = f.ch_r(q, n + 1).expect("checked by caller");
    let grid_in = f.ch_r(q, m + 1).expect("checked by caller");
    let k0 = cell_kernel_op(f, &grid_out, &grid_in, coeffs);
    let p_out = projection_sum(f, &f.ch_r(q, n).expect("coarser"), j == 1);
    let p_in = projection_sum(f, &f.ch_r(q, m).expect("coarser"), k == 1);
    &p_out * k0 * p_in
}

/// Scalar integral operator with kernel constant on `outs x ins` cells.
fn cell_kernel_op(
    f: &Filtration,
    outs: &[Atom],
    ins: &[Atom],
    coeffs: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = f.n_leaves();
    let mut out = DMatrix::zeros(n, n);
    for (i, cr) in outs.iter().enumerate() {
        for (j, cs) in ins.iter().enumerate() {
            let c = coeffs[(i, j)];
            if c == 0.0 {
                continue;
            }
            for lx in f.leaf_span(*cr) {
                for ly in f.leaf_span(*cs) {
                    out[(lx, ly)] = c * f.leaf_sigma(ly);
                }
            }
        }
    }
    out
}

fn projection_sum(f: &Filtration, atoms: &[Atom], difference: bool) -> DMatrix<f64> {
    let n = f.n_leaves();
    let mut out = DMatrix::zeros(n, n);
    for &a in atoms {
        if difference {
            out += martingale::dense_delta(f, 1, a);
        } else {
            out += martingale::dense_expectation(f, 1, a);
        }
    }
    out
}

/// Read the cell-constant kernel of a dense scalar operator supported on
/// `q` and rescale it so the sup norm equals `target_fraction / |Q|`.
/// Returns `None` for the zero block.
fn extract_block(
    f: &Filtration,
    dense: &DMatrix<f64>,
    q: Atom,
    grid_depth: usize,
    target_fraction: f64,
) -> Option<KernelBlock> {
    let mut grid = kernel_table(f, dense, q, grid_depth);
    let sup = if grid.is_empty() { 0.0 } else { grid.amax() };
    let mass = f.mass(q);
    if sup <= 0.0 || mass <= 0.0 {
        return None;
    }
    grid *= target_fraction / (mass * sup);
    Some(KernelBlock {
        owner: q,
        grid_depth,
        grid,
    })
}

/// Kernel table of a dense scalar operator on the `Ch^u(q)` grid:
/// `K(R, S) = (B 1_S)(R) / |S|`, read at the first positive-mass leaf of
/// `R`; cells with zero mass give zero entries.
pub fn kernel_table(f: &Filtration, dense: &DMatrix<f64>, q: Atom, u: usize) -> DMatrix<f64> {
    let cells = f.ch_r(q, u).expect("grid depth within the tree");
    let k = cells.len();
    DMatrix::from_fn(k, k, |i, j| {
        let cs = cells[j];
        let mass = f.mass(cs);
        if mass == 0.0 {
            return 0.0;
        }
        let Some(lx) = f.leaf_span(cells[i]).find(|&l| f.leaf_sigma(l) > 0.0) else {
            return 0.0;
        };
        let applied: f64 = f.leaf_span(cs).map(|ly| dense[(lx, ly)]).sum();
        applied / mass
    })
}

/// Canonical kernel of a dense scalar block mapping functions on `q_in`
/// to functions on `r_out`, resolved on the children grid:
/// `K(x, y) = |Q_y|^{-1} (B 1_{Q_y})(x)` for the child `Q_y` containing
/// `y`. Leaf endpoints resolve to the atom itself.
pub fn canonical_kernel(
    f: &Filtration,
    dense: &DMatrix<f64>,
    q_in: Atom,
    r_out: Atom,
) -> DMatrix<f64> {
    let ins: Vec<Atom> = if f.is_leaf(q_in) {
        vec![q_in]
    } else {
        f.children(q_in).collect()
    };
    let outs: Vec<Atom> = if f.is_leaf(r_out) {
        vec![r_out]
    } else {
        f.children(r_out).collect()
    };
    DMatrix::from_fn(outs.len(), ins.len(), |i, j| {
        let mass = f.mass(ins[j]);
        if mass == 0.0 {
            return 0.0;
        }
        let Some(lx) = f.leaf_span(outs[i]).find(|&l| f.leaf_sigma(l) > 0.0) else {
            return 0.0;
        };
        let applied: f64 = f.leaf_span(ins[j]).map(|ly| dense[(lx, ly)]).sum();
        applied / mass
    })
}
