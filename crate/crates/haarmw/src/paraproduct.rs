//! Weighted paraproducts of a shift operator and their exchange
//! identities.
//!
//! The W-side paraproduct of complexity `r` collects, for every atom `Q`
//! deep enough to carry `Ch^r`, the `Delta^V_R`-pieces of `T_W` applied to
//! the weighted average of the input on `Q`. It captures the
//! lower-triangular-against-averages part of `T_W`; its defining sum is an
//! orthogonal series in L2(V). The V-side paraproduct plays the same role
//! for the adjoint with the measures swapped.
//!
//! Materialized densely over the leaf basis; desk-scale instances make the
//! SVD the simplest exact norm oracle.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
// resolves float math in no_std builds; with std in the crate graph the
// inherent methods shadow it
#[allow(unused_imports)]
use num_traits::Float;

use crate::filtration::{Atom, Filtration};
use crate::linalg;
use crate::martingale;
use crate::measure::{MatrixMeasure, VecFunction};
use crate::shift::ShiftOperator;
use crate::tol;

/// Which side of the pairing the paraproduct lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Built from `T`; maps L2(W) to L2(V).
    W,
    /// Built from `T*`; maps L2(V) to L2(W).
    V,
}

/// A dense paraproduct over the leaf basis.
#[derive(Debug, Clone)]
pub struct Paraproduct {
    pub complexity: usize,
    pub side: Side,
    pub matrix: DMatrix<f64>,
}

/// Result of the exchange-identity check between a paraproduct and its
/// base operator.
#[derive(Debug, Clone)]
pub struct ReplacementReport {
    pub pass: bool,
    /// Largest relative residual per clause (vanishing at or above the
    /// diagonal band, vanishing off-support, and agreement below the band).
    pub clause_residuals: [f64; 3],
    pub witness: Option<(Atom, Atom)>,
}

/// Assemble the paraproduct by its defining sum: for each atom `Q` with
/// room for `Ch^r`, the `Delta^out_R` pieces of the operator applied to
/// `1_Q`, times the weighted average on `Q`.
pub fn build_paraproduct(
    f: &Filtration,
    t: &ShiftOperator,
    w: &MatrixMeasure,
    v: &MatrixMeasure,
    side: Side,
) -> Paraproduct {
    let matrix = match side {
        Side::W => assemble(f, &t.dense_weighted(f, w), w, v, t.complexity(), None),
        Side::V => assemble(
            f,
            &t.adjoint().dense_weighted(f, v),
            v,
            w,
            t.complexity(),
            None,
        ),
    };
    Paraproduct {
        complexity: t.complexity(),
        side,
        matrix,
    }
}

/// Alternate assembly path: replace `1_Q` by the indicator of a fixed
/// enclosing atom (the root). Equality of the two assemblies reflects the
/// shift invariance of the difference pieces.
pub fn build_paraproduct_alt(
    f: &Filtration,
    t: &ShiftOperator,
    w: &MatrixMeasure,
    v: &MatrixMeasure,
    side: Side,
) -> Paraproduct {
    let root = f.root();
    let matrix = match side {
        Side::W => assemble(f, &t.dense_weighted(f, w), w, v, t.complexity(), Some(root)),
        Side::V => assemble(
            f,
            &t.adjoint().dense_weighted(f, v),
            v,
            w,
            t.complexity(),
            Some(root),
        ),
    };
    Paraproduct {
        complexity: t.complexity(),
        side,
        matrix,
    }
}

fn assemble(
    f: &Filtration,
    op: &DMatrix<f64>,
    in_m: &MatrixMeasure,
    out_m: &MatrixMeasure,
    r: usize,
    indicator_override: Option<Atom>,
) -> DMatrix<f64> {
    let d = in_m.dim();
    let n = f.n_leaves() * d;
    let mut pi = DMatrix::zeros(n, n);
    let in_pinvs = martingale::aggregate_pinvs(f, in_m);
    for q in f.atoms() {
        // no room for Ch^r, or only leaf targets whose deltas vanish
        if f.rank(q) + r > f.depth() {
            continue;
        }
        let targets: Vec<Atom> = f
            .ch_r(q, r)
            .expect("rank checked")
            .into_iter()
            .filter(|&a| !f.is_leaf(a))
            .collect();
        if targets.is_empty() {
            continue;
        }
        let source = indicator_override.unwrap_or(q);
        // columns: sum of Delta^out_R (op 1_source e_c) over the targets
        let mut y = DMatrix::zeros(n, d);
        for c in 0..d {
            let mut e = DVector::zeros(d);
            e[c] = 1.0;
            let ind = VecFunction::indicator(f, d, source, &e);
            let u = VecFunction::from_vector(d, op * ind.values());
            let mut col = VecFunction::zeros(f, d);
            for &ra in &targets {
                let piece = martingale::weighted_delta(f, &u, ra, out_m);
                *col.values_mut() += piece.values();
            }
            y.column_mut(c).copy_from(col.values());
        }
        // append y * W(Q)^{-1} * (row block integrating over Q)
        let pinv = &in_pinvs[q.index()];
        for ly in f.leaf_span(q) {
            let block = pinv * in_m.leaf_mass(ly);
            let contrib = &y * &block;
            for row in 0..n {
                for col in 0..d {
                    pi[(row, ly * d + col)] += contrib[(row, col)];
                }
            }
        }
    }
    pi
}

/// The adjoint of a paraproduct as a dense matrix between the opposite
/// weighted spaces (choice on null directions resolved by pseudoinverse).
pub fn adjoint_matrix(p: &Paraproduct, w: &MatrixMeasure, v: &MatrixMeasure) -> DMatrix<f64> {
    // W-side maps L2(W) -> L2(V); its adjoint maps L2(V) -> L2(W) and
    // satisfies D_in adj = P^T D_out.
    let (in_m, out_m) = match p.side {
        Side::W => (w, v),
        Side::V => (v, w),
    };
    let d_out = out_m.block_diag();
    let d_in_pinv_sqrt = in_m.block_diag_pinv_sqrt();
    // pinv(D_in) = pinv_sqrt * pinv_sqrt
    (&d_in_pinv_sqrt * &d_in_pinv_sqrt) * p.matrix.transpose() * d_out
}

/// Exchange identities between `T_W` and its W-side paraproduct, checked
/// on a W-orthonormal basis of every `Delta^W_Q` range:
/// the composition `Delta^V_R Pi Delta^W_Q` vanishes at or above the
/// complexity band and off-support, and agrees with
/// `Delta^V_R T_W Delta^W_Q` strictly below the band.
pub fn check_replacement(
    f: &Filtration,
    t: &ShiftOperator,
    w: &MatrixMeasure,
    v: &MatrixMeasure,
    p: &Paraproduct,
) -> ReplacementReport {
    let r = t.complexity();
    let op = t.dense_weighted(f, w);
    let pinvs = martingale::aggregate_pinvs(f, v);
    let mut report = ReplacementReport {
        pass: true,
        clause_residuals: [0.0; 3],
        witness: None,
    };
    for q in f.atoms() {
        let basis = martingale::weighted_delta_range_basis(f, w, q);
        if basis.ncols() == 0 {
            continue;
        }
        let y_pi = &p.matrix * &basis;
        let y_t = &op * &basis;
        for col in 0..basis.ncols() {
            let upi = VecFunction::from_vector(w.dim(), y_pi.column(col).clone_owned());
            let ut = VecFunction::from_vector(w.dim(), y_t.column(col).clone_owned());
            let ints_pi = martingale::atom_integrals(f, v, &upi);
            let mut diff = upi.clone();
            *diff.values_mut() -= ut.values();
            let ints_diff = martingale::atom_integrals(f, v, &diff);
            let scale = 1.0 + v.norm(&upi).max(v.norm(&ut));
            for ra in f.atoms() {
                let (clause, res) = if f.rank(ra) <= r + f.rank(q) {
                    (
                        0,
                        martingale::weighted_delta_norm_cached(f, v, ra, &ints_pi, &pinvs),
                    )
                } else if !f.contains(q, ra) {
                    (
                        1,
                        martingale::weighted_delta_norm_cached(f, v, ra, &ints_pi, &pinvs),
                    )
                } else {
                    (
                        2,
                        martingale::weighted_delta_norm_cached(f, v, ra, &ints_diff, &pinvs),
                    )
                };
                let rel = res / scale;
                if rel > report.clause_residuals[clause] {
                    report.clause_residuals[clause] = rel;
                }
                if rel > tol::IDENTITY && report.witness.is_none() {
                    report.pass = false;
                    report.witness = Some((q, ra));
                }
            }
        }
    }
    report
}

/// The decomposition identity behind the main-part estimate:
/// `Delta^V_R (T_W - Pi^W - (Pi^V)*) Delta^W_Q = 0` whenever the rank gap
/// exceeds the complexity. Returns the largest relative residual.
pub fn check_combined_identity(
    f: &Filtration,
    t: &ShiftOperator,
    w: &MatrixMeasure,
    v: &MatrixMeasure,
    pi_w: &Paraproduct,
    pi_v: &Paraproduct,
) -> f64 {
    let r = t.complexity();
    let combo = t.dense_weighted(f, w) - &pi_w.matrix - adjoint_matrix(pi_v, w, v);
    let pinvs = martingale::aggregate_pinvs(f, v);
    let mut worst = 0.0f64;
    for q in f.atoms() {
        let basis = martingale::weighted_delta_range_basis(f, w, q);
        if basis.ncols() == 0 {
            continue;
        }
        let y = &combo * &basis;
        for col in 0..basis.ncols() {
            let u = VecFunction::from_vector(w.dim(), y.column(col).clone_owned());
            let ints = martingale::atom_integrals(f, v, &u);
            let scale = 1.0 + v.norm(&u);
            for ra in f.atoms() {
                let gap = f.rank(ra).abs_diff(f.rank(q));
                if gap <= r {
                    continue;
                }
                let res = martingale::weighted_delta_norm_cached(f, v, ra, &ints, &pinvs);
                worst = worst.max(res / scale);
            }
        }
    }
    worst
}

/// Largest relative V-norm of the cross-Gram between the `Delta^V_R`
/// pieces of the paraproduct output over distinct targets; the defining
/// series is orthogonal, so this should vanish.
pub fn check_output_orthogonality(
    f: &Filtration,
    p: &Paraproduct,
    w: &MatrixMeasure,
    v: &MatrixMeasure,
    probes: u64,
) -> f64 {
    let (in_m, out_m) = match p.side {
        Side::W => (w, v),
        Side::V => (v, w),
    };
    let d = in_m.dim();
    let mut worst = 0.0f64;
    for probe in 0..probes {
        let fun = VecFunction::random(0xA0 + probe, f, d);
        let out = VecFunction::from_vector(d, &p.matrix * fun.values());
        let pieces: Vec<VecFunction> = f
            .atoms()
            .filter(|&ra| !f.is_leaf(ra))
            .map(|ra| martingale::weighted_delta(f, &out, ra, out_m))
            .collect();
        let norms: Vec<f64> = pieces.iter().map(|p| out_m.norm(p)).collect();
        for i in 0..pieces.len() {
            for j in (i + 1)..pieces.len() {
                let ip = out_m.inner_product(&pieces[i], &pieces[j]).abs();
                let scale = 1.0 + norms[i] * norms[j];
                worst = worst.max(ip / scale);
            }
        }
    }
    worst
}

/// Best constant in the square-sum testing condition behind the
/// paraproduct bound: the supremum over atoms `Q` of the largest
/// generalized eigenvalue of
/// `sum_{R below Q, rk R >= rk Q + r} ||Delta^V_R T_W 1_Q e||^2`
/// against `||1_Q e||^2` (null directions excluded by pseudoinverse).
pub fn square_sum_testing_constant(
    f: &Filtration,
    t: &ShiftOperator,
    w: &MatrixMeasure,
    v: &MatrixMeasure,
) -> (f64, Option<Atom>) {
    let r = t.complexity();
    let d = w.dim();
    let op = t.dense_weighted(f, w);
    let mut best = 0.0f64;
    let mut witness = None;
    for q in f.atoms() {
        let us: Vec<VecFunction> = (0..d)
            .map(|c| {
                let mut e = DVector::zeros(d);
                e[c] = 1.0;
                let ind = VecFunction::indicator(f, d, q, &e);
                VecFunction::from_vector(d, &op * ind.values())
            })
            .collect();
        let mut gram = DMatrix::zeros(d, d);
        for ra in f.atoms() {
            if !(f.contains(q, ra) && f.rank(ra) >= f.rank(q) + r) || f.is_leaf(ra) {
                continue;
            }
            let pieces: Vec<VecFunction> = us
                .iter()
                .map(|u| martingale::weighted_delta(f, u, ra, v))
                .collect();
            for i in 0..d {
                for j in 0..d {
                    gram[(i, j)] += v.inner_product(&pieces[i], &pieces[j]);
                }
            }
        }
        let half = linalg::psd_pinv_sqrt(w.aggregate(q));
        let val = linalg::max_eigenvalue(&(&half * &gram * &half));
        if val > best {
            best = val;
            witness = Some(q);
        }
    }
    (best.sqrt(), witness)
}

/// Certify the paraproduct norm bound: the exact weighted norm against
/// `C(d)^{1/2}` times the square-sum testing constant.
pub fn paraproduct_norm_bound(
    p: &Paraproduct,
    w: &MatrixMeasure,
    v: &MatrixMeasure,
    t1: f64,
) -> crate::certificate::Certificate {
    let d = match p.side {
        Side::W => w.dim(),
        Side::V => v.dim(),
    };
    let lhs = paraproduct_norm(p, w, v);
    let rhs = crate::analysis::carleson_dimensional_constant(d).sqrt() * t1;
    crate::certificate::Certificate::evaluate("para-bound", lhs, rhs)
}

/// Exact weighted operator norm of the paraproduct.
pub fn paraproduct_norm(p: &Paraproduct, w: &MatrixMeasure, v: &MatrixMeasure) -> f64 {
    let (in_m, out_m) = match p.side {
        Side::W => (w, v),
        Side::V => (v, w),
    };
    linalg::op_norm(&(out_m.block_diag_sqrt() * &p.matrix * in_m.block_diag_pinv_sqrt()))
}
