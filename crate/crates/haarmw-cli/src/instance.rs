//! Deterministic instance generation and the JSON schemas for trees,
//! measures, and operators.
//!
//! Every sweep tuple `(seed, dim, depth, branching, complexity)` maps to a
//! single derived seed, from which the tree masses, both measures, the
//! operator shape `(m, n)` and kind, and any degeneracy (rank-deficient or
//! zero leaf masses, zero base-measure leaves, single-child chains) are
//! drawn in a fixed order. Rerunning a tuple reproduces the instance
//! bit for bit.

use anyhow::{bail, Context, Result};
use haarmw::filtration::{Branching, Filtration};
use haarmw::measure::{random_psd, MatrixMeasure};
use haarmw::shift::{KernelBlock, ShiftFlags, ShiftOperator};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// One cell of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TupleKey {
    pub seed: u64,
    pub dim: usize,
    pub depth: usize,
    pub branching: usize,
    pub complexity: usize,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn combine(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

impl TupleKey {
    /// Stable per-tuple seed driving all randomness of the instance.
    pub fn tuple_seed(&self) -> u64 {
        let mut s = splitmix(self.seed);
        s = combine(s, self.dim as u64);
        s = combine(s, self.depth as u64);
        s = combine(s, self.branching as u64);
        s = combine(s, self.complexity as u64);
        s
    }

    pub fn stem(&self) -> String {
        format!(
            "s{}-d{}-dep{}-b{}-r{}",
            self.seed, self.dim, self.depth, self.branching, self.complexity
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Haar,
    Generalized,
}

/// Controlled degradations keeping the sweep honest about edge cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    None,
    /// Rank-deficient W leaf masses.
    RankDeficient,
    /// One W leaf mass is the zero matrix.
    ZeroWLeaf,
    /// One base-measure leaf has zero mass.
    ZeroSigmaLeaf,
    /// One atom keeps a single child (set-coinciding atoms of different
    /// ranks).
    ThinChain,
    /// Rank-deficient on both measures plus a zero base-measure leaf.
    Mixed,
}

impl Degeneracy {
    pub fn tag(&self) -> &'static str {
        match self {
            Degeneracy::None => "plain",
            Degeneracy::RankDeficient => "rankdef",
            Degeneracy::ZeroWLeaf => "zerow",
            Degeneracy::ZeroSigmaLeaf => "zerosigma",
            Degeneracy::ThinChain => "thin",
            Degeneracy::Mixed => "mixed",
        }
    }
}

pub struct Instance {
    pub key: TupleKey,
    pub filtration: Filtration,
    pub w: MatrixMeasure,
    pub v: MatrixMeasure,
    pub op: ShiftOperator,
    pub kind: OpKind,
    pub degeneracy: Degeneracy,
}

impl Instance {
    pub fn tag(&self) -> String {
        let kind = match self.kind {
            OpKind::Haar => "haar",
            OpKind::Generalized => "gen",
        };
        format!("{}/{}", kind, self.degeneracy.tag())
    }
}

/// All tuples of the sweep; complexity must leave room for at least one
/// block (`r < depth`).
pub fn enumerate(cfg: &ExperimentConfig) -> Vec<TupleKey> {
    let mut keys = Vec::new();
    for &seed in &cfg.seeds {
        for &dim in &cfg.dims {
            for &depth in &cfg.depths {
                for &branching in &cfg.branchings {
                    for &complexity in &cfg.complexities {
                        if complexity < depth {
                            keys.push(TupleKey {
                                seed,
                                dim,
                                depth,
                                branching,
                                complexity,
                            });
                        }
                    }
                }
            }
        }
    }
    keys
}

/// Generate the instance of a tuple.
pub fn generate(key: TupleKey, condition_cap: f64) -> Instance {
    let ts = key.tuple_seed();
    let mut rng = ChaCha8Rng::seed_from_u64(ts);
    let d = key.dim;
    let r = key.complexity;

    let roll: u8 = rng.random_range(0..8);
    let mut degeneracy = match roll {
        0..=2 => Degeneracy::None,
        3 => Degeneracy::RankDeficient,
        4 => Degeneracy::ZeroWLeaf,
        5 => Degeneracy::ZeroSigmaLeaf,
        6 => Degeneracy::ThinChain,
        _ => Degeneracy::Mixed,
    };
    if degeneracy == Degeneracy::ThinChain && key.depth < 2 {
        degeneracy = Degeneracy::None;
    }

    let branching = if degeneracy == Degeneracy::ThinChain {
        let mut rows = Vec::new();
        let mut size = 1usize;
        for rank in 0..key.depth {
            let mut row = vec![key.branching; size];
            if rank == 1 {
                row[0] = 1;
            }
            size = row.iter().sum();
            rows.push(row);
        }
        Branching::PerAtom(rows)
    } else {
        Branching::Uniform(key.branching)
    };

    // count leaves for the chosen branching
    let n_leaves = match &branching {
        Branching::Uniform(b) => b.pow(key.depth as u32),
        Branching::PerAtom(rows) => rows.last().map_or(1, |row| row.iter().sum()),
    };

    let mut sigma: Vec<f64> = (0..n_leaves).map(|_| rng.random_range(0.2..2.0)).collect();
    if matches!(degeneracy, Degeneracy::ZeroSigmaLeaf | Degeneracy::Mixed) && n_leaves > 1 {
        let idx = rng.random_range(0..n_leaves);
        sigma[idx] = 0.0;
    }
    let filtration =
        Filtration::build_tree(key.depth, &branching, &sigma).expect("generated masses are valid");

    // Rank-deficient measures zero one coordinate row/column exactly on
    // every leaf, so aggregates are cleanly deficient (their kernel
    // components have exactly zero weighted norm) instead of accidentally
    // near-singular. W and V use different coordinates.
    let w_deficient =
        matches!(degeneracy, Degeneracy::RankDeficient | Degeneracy::Mixed) && d > 1;
    let mut w_leaves: Vec<DMatrix<f64>> = (0..n_leaves)
        .map(|_| {
            if w_deficient {
                pad_deficient(&random_psd(&mut rng, d - 1, condition_cap, d - 1), d, d - 1)
            } else {
                random_psd(&mut rng, d, condition_cap, d)
            }
        })
        .collect();
    if degeneracy == Degeneracy::ZeroWLeaf && n_leaves > 1 {
        let idx = rng.random_range(0..n_leaves);
        w_leaves[idx] = DMatrix::zeros(d, d);
    }
    let w = MatrixMeasure::new(&filtration, d, w_leaves).expect("generated masses are PSD");

    let v_deficient = degeneracy == Degeneracy::Mixed && d > 1;
    let v_leaves: Vec<DMatrix<f64>> = (0..n_leaves)
        .map(|_| {
            if v_deficient {
                pad_deficient(&random_psd(&mut rng, d - 1, condition_cap, d - 1), d, 0)
            } else {
                random_psd(&mut rng, d, condition_cap, d)
            }
        })
        .collect();
    let v = MatrixMeasure::new(&filtration, d, v_leaves).expect("generated masses are PSD");

    let kind = if rng.random_bool(0.5) {
        OpKind::Haar
    } else {
        OpKind::Generalized
    };
    let a = rng.random_range(0..=r);
    let (m, n) = if rng.random_bool(0.5) { (r, a) } else { (a, r) };
    let op_seed: u64 = rng.random();
    let op = match kind {
        OpKind::Haar => ShiftOperator::make_haar_shift(op_seed, &filtration, m, n),
        OpKind::Generalized => ShiftOperator::make_generalized_shift(op_seed, &filtration, m, n),
    }
    .expect("complexity fits the depth");

    Instance {
        key,
        filtration,
        w,
        v,
        op,
        kind,
        degeneracy,
    }
}

/// Embed a `(d-1)`-square matrix into `d x d` with the given coordinate's
/// row and column exactly zero.
fn pad_deficient(base: &DMatrix<f64>, d: usize, zero_coord: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, d);
    let map = |i: usize| if i < zero_coord { i } else { i + 1 };
    for i in 0..d - 1 {
        for j in 0..d - 1 {
            out[(map(i), map(j))] = base[(i, j)];
        }
    }
    out
}

/// Random PSD Carleson sequence for an instance, one matrix per atom.
pub fn carleson_sequence(inst: &Instance) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(combine(inst.key.tuple_seed(), 0xCA71));
    let d = inst.key.dim;
    inst.filtration
        .atoms()
        .map(|_| {
            let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            &g * g.transpose()
        })
        .collect()
}

/// Corrupt an operator for harness self-tests.
pub fn sabotage(inst: &Instance, mode: &str) -> ShiftOperator {
    match mode {
        "unscaled-kernel" => inst.op.scaled(50.0),
        "fine-grid" => {
            let f = &inst.filtration;
            let r = inst.op.complexity();
            if r + 2 <= f.depth() {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(combine(inst.key.tuple_seed(), 0xBAD));
                let cells = f.ch_r(f.root(), r + 2).expect("depth checked").len();
                let grid = DMatrix::from_fn(cells, cells, |_, _| rng.random_range(-1.0..1.0))
                    / f.mass(f.root()).max(1e-9);
                ShiftOperator::from_blocks(
                    f,
                    r,
                    ShiftFlags {
                        is_big_haar: true,
                        annihilates_constants: false,
                    },
                    vec![KernelBlock {
                        owner: f.root(),
                        grid_depth: r + 2,
                        grid,
                    }],
                )
                .expect("valid violator block")
            } else {
                inst.op.scaled(50.0)
            }
        }
        other => panic!("unknown sabotage mode {other}"),
    }
}

// --- JSON schemas ---------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BranchingSpec {
    Uniform(usize),
    PerAtom(Vec<Vec<usize>>),
}

/// Tree file: `{depth, branching, leaf_masses, seed?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeSpec {
    pub depth: usize,
    pub branching: BranchingSpec,
    pub leaf_masses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Measures file: per-leaf row-major matrices for both weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasuresSpec {
    pub dim: usize,
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlagsSpec {
    pub is_big_haar: bool,
    pub annihilates_constants: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSpec {
    pub atom_path: Vec<usize>,
    pub grid: Vec<Vec<f64>>,
    /// Grid resolution below the owner; defaults to `r + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_depth: Option<usize>,
}

/// Operator file: `{r, flags, blocks}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub r: usize,
    pub flags: FlagsSpec,
    pub blocks: Vec<BlockSpec>,
}

impl TreeSpec {
    pub fn from_instance(inst: &Instance) -> Self {
        let f = &inst.filtration;
        let branching = match inst.degeneracy {
            Degeneracy::ThinChain => BranchingSpec::PerAtom(
                (0..f.depth())
                    .map(|rank| f.generation(rank).map(|q| f.child_count(q)).collect())
                    .collect(),
            ),
            _ => BranchingSpec::Uniform(inst.key.branching),
        };
        TreeSpec {
            depth: f.depth(),
            branching,
            leaf_masses: f.leaf_sigmas().to_vec(),
            seed: Some(inst.key.seed),
        }
    }

    pub fn build(&self) -> Result<Filtration> {
        let branching = match &self.branching {
            BranchingSpec::Uniform(b) => Branching::Uniform(*b),
            BranchingSpec::PerAtom(rows) => Branching::PerAtom(rows.clone()),
        };
        Filtration::build_tree(self.depth, &branching, &self.leaf_masses)
            .context("building tree from spec")
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn matrix_from_rows(dim: usize, rows: &[f64]) -> Result<DMatrix<f64>> {
    if rows.len() != dim * dim {
        bail!("expected {} entries, got {}", dim * dim, rows.len());
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i * dim + j]))
}

impl MeasuresSpec {
    pub fn from_instance(inst: &Instance) -> Self {
        let n = inst.filtration.n_leaves();
        MeasuresSpec {
            dim: inst.key.dim,
            w: (0..n).map(|l| matrix_rows(inst.w.leaf_mass(l))).collect(),
            v: (0..n).map(|l| matrix_rows(inst.v.leaf_mass(l))).collect(),
        }
    }

    pub fn build(&self, f: &Filtration) -> Result<(MatrixMeasure, MatrixMeasure)> {
        let w_leaves = self
            .w
            .iter()
            .map(|rows| matrix_from_rows(self.dim, rows))
            .collect::<Result<Vec<_>>>()?;
        let v_leaves = self
            .v
            .iter()
            .map(|rows| matrix_from_rows(self.dim, rows))
            .collect::<Result<Vec<_>>>()?;
        let w = MatrixMeasure::new(f, self.dim, w_leaves).context("building W")?;
        let v = MatrixMeasure::new(f, self.dim, v_leaves).context("building V")?;
        Ok((w, v))
    }
}

impl OperatorSpec {
    pub fn from_operator(f: &Filtration, op: &ShiftOperator) -> Self {
        OperatorSpec {
            r: op.complexity(),
            flags: FlagsSpec {
                is_big_haar: op.flags().is_big_haar,
                annihilates_constants: op.flags().annihilates_constants,
            },
            blocks: op
                .blocks()
                .iter()
                .map(|b| {
                    let k = b.grid.nrows();
                    BlockSpec {
                        atom_path: f.path(b.owner),
                        grid: (0..k)
                            .map(|i| (0..k).map(|j| b.grid[(i, j)]).collect())
                            .collect(),
                        grid_depth: (b.grid_depth != op.complexity() + 1)
                            .then_some(b.grid_depth),
                    }
                })
                .collect(),
        }
    }

    pub fn build(&self, f: &Filtration) -> Result<ShiftOperator> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let owner = f
                    .atom_by_path(&b.atom_path)
                    .with_context(|| format!("no atom at path {:?}", b.atom_path))?;
                let k = b.grid.len();
                let mut grid = DMatrix::zeros(k, k);
                for (i, row) in b.grid.iter().enumerate() {
                    if row.len() != k {
                        bail!("ragged grid");
                    }
                    for (j, &val) in row.iter().enumerate() {
                        grid[(i, j)] = val;
                    }
                }
                Ok(KernelBlock {
                    owner,
                    grid_depth: b.grid_depth.unwrap_or(self.r + 1),
                    grid,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ShiftOperator::from_blocks(
            f,
            self.r,
            ShiftFlags {
                is_big_haar: self.flags.is_big_haar,
                annihilates_constants: self.flags.annihilates_constants,
            },
            blocks,
        )
        .context("assembling operator from spec")
    }
}
