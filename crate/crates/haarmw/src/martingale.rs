//! Expectation and martingale-difference projections, unweighted and
//! matrix-weighted, plus the orthogonal decomposition they generate.
//!
//! The weighted expectation averages with the pseudoinverse of the atom
//! mass, so degenerate measures follow the zero conventions: a zero-mass
//! atom averages to zero, and all identities hold in the relevant L2 norm
//! rather than pointwise.
//!
//! Leaves carry no difference operator; a leaf's children sum is empty, so
//! by convention its delta is the zero operator. Decompositions therefore
//! stop one generation above the leaves, where functions are already
//! constant.
//!
//! Every projection is available both as a function transformer and as a
//! dense matrix over the leaf basis (dimension `n_leaves * d`).

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
// resolves float math in no_std builds; with std in the crate graph the
// inherent methods shadow it
#[allow(unused_imports)]
use num_traits::Float;

use crate::filtration::{Atom, Filtration};
use crate::linalg;
use crate::measure::{MatrixMeasure, VecFunction};
use crate::tol;

/// `<f>_Q`: componentwise sigma-average over `Q`, zero when `sigma(Q) = 0`.
pub fn average(f: &Filtration, fun: &VecFunction, q: Atom) -> DVector<f64> {
    let mass = f.mass(q);
    let mut acc = DVector::zeros(fun.dim());
    if mass == 0.0 {
        return acc;
    }
    for l in f.leaf_span(q) {
        acc.axpy(f.leaf_sigma(l), &fun.leaf(l).clone_owned(), 1.0);
    }
    acc / mass
}

/// The averaging operator `E_Q f = <f>_Q 1_Q`.
pub fn expectation(f: &Filtration, fun: &VecFunction, q: Atom) -> VecFunction {
    let avg = average(f, fun, q);
    let mut out = VecFunction::zeros(f, fun.dim());
    for l in f.leaf_span(q) {
        out.set_leaf(l, &avg);
    }
    out
}

/// The martingale difference `Delta_Q = sum_{R in Ch Q} E_R - E_Q`; the
/// zero operator on leaves.
pub fn delta(f: &Filtration, fun: &VecFunction, q: Atom) -> VecFunction {
    let mut out = VecFunction::zeros(f, fun.dim());
    if f.is_leaf(q) {
        return out;
    }
    let avg_q = average(f, fun, q);
    for r in f.children(q) {
        let avg_r = average(f, fun, r);
        let diff = &avg_r - &avg_q;
        for l in f.leaf_span(r) {
            out.set_leaf(l, &diff);
        }
    }
    out
}

/// `<f>_Q^W = W(Q)^{-1} int_Q dW f` with the Moore–Penrose pseudoinverse;
/// lands in the range of `W(Q)`.
pub fn weighted_average(
    f: &Filtration,
    fun: &VecFunction,
    q: Atom,
    m: &MatrixMeasure,
) -> DVector<f64> {
    let pinv = linalg::psd_pinv(m.aggregate(q), tol::REL_EIG_CUTOFF)
        .expect("aggregated masses are symmetric");
    pinv * m.integral(f, fun, q)
}

/// The weighted expectation `E^W_Q f = <f>_Q^W 1_Q`.
pub fn weighted_expectation(
    f: &Filtration,
    fun: &VecFunction,
    q: Atom,
    m: &MatrixMeasure,
) -> VecFunction {
    let avg = weighted_average(f, fun, q, m);
    let mut out = VecFunction::zeros(f, fun.dim());
    for l in f.leaf_span(q) {
        out.set_leaf(l, &avg);
    }
    out
}

/// The weighted martingale difference
/// `Delta^W_Q = sum_{R in Ch Q} E^W_R - E^W_Q`; zero on leaves.
pub fn weighted_delta(
    f: &Filtration,
    fun: &VecFunction,
    q: Atom,
    m: &MatrixMeasure,
) -> VecFunction {
    let mut out = VecFunction::zeros(f, fun.dim());
    if f.is_leaf(q) {
        return out;
    }
    let avg_q = weighted_average(f, fun, q, m);
    for r in f.children(q) {
        let avg_r = weighted_average(f, fun, r, m);
        let diff = &avg_r - &avg_q;
        for l in f.leaf_span(r) {
            out.set_leaf(l, &diff);
        }
    }
    out
}

/// Label of one piece of the orthogonal decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// `E^W_{Q0} f`, the top expectation.
    Average(Atom),
    /// `Delta^W_Q f` for a non-leaf descendant `Q`.
    Difference(Atom),
}

/// Orthogonal decomposition of a function supported on `q0`: the top
/// weighted expectation plus every weighted difference below `q0`. The
/// pieces are pairwise orthogonal in L2(W) and sum back to `f` there.
pub fn decompose(
    f: &Filtration,
    fun: &VecFunction,
    q0: Atom,
    m: &MatrixMeasure,
) -> Vec<(Component, VecFunction)> {
    let mut parts = Vec::new();
    parts.push((Component::Average(q0), weighted_expectation(f, fun, q0, m)));
    for q in f.atoms() {
        if !f.is_leaf(q) && f.contains(q0, q) {
            parts.push((Component::Difference(q), weighted_delta(f, fun, q, m)));
        }
    }
    parts
}

// --- dense matrices over the leaf basis ---------------------------------

/// Dense `E_Q` (unweighted) acting componentwise on `F^d`-valued tables.
pub fn dense_expectation(f: &Filtration, dim: usize, q: Atom) -> DMatrix<f64> {
    let n = f.n_leaves() * dim;
    let mut out = DMatrix::zeros(n, n);
    let mass = f.mass(q);
    if mass == 0.0 {
        return out;
    }
    for lx in f.leaf_span(q) {
        for ly in f.leaf_span(q) {
            let w = f.leaf_sigma(ly) / mass;
            for c in 0..dim {
                out[(lx * dim + c, ly * dim + c)] = w;
            }
        }
    }
    out
}

/// Dense `Delta_Q` (unweighted).
pub fn dense_delta(f: &Filtration, dim: usize, q: Atom) -> DMatrix<f64> {
    let n = f.n_leaves() * dim;
    let mut out = DMatrix::zeros(n, n);
    if f.is_leaf(q) {
        return out;
    }
    for r in f.children(q) {
        out += dense_expectation(f, dim, r);
    }
    out -= dense_expectation(f, dim, q);
    out
}

/// Dense `E^W_Q`: block rows `W(Q)^{-1} W_L'` on the leaves of `Q`.
pub fn dense_weighted_expectation(f: &Filtration, m: &MatrixMeasure, q: Atom) -> DMatrix<f64> {
    let d = m.dim();
    let n = f.n_leaves() * d;
    let mut out = DMatrix::zeros(n, n);
    let pinv = linalg::psd_pinv(m.aggregate(q), tol::REL_EIG_CUTOFF)
        .expect("aggregated masses are symmetric");
    for ly in f.leaf_span(q) {
        let block = &pinv * m.leaf_mass(ly);
        for lx in f.leaf_span(q) {
            out.view_mut((lx * d, ly * d), (d, d)).copy_from(&block);
        }
    }
    out
}

/// Dense `Delta^W_Q`.
pub fn dense_weighted_delta(f: &Filtration, m: &MatrixMeasure, q: Atom) -> DMatrix<f64> {
    let d = m.dim();
    let n = f.n_leaves() * d;
    let mut out = DMatrix::zeros(n, n);
    if f.is_leaf(q) {
        return out;
    }
    for r in f.children(q) {
        out += dense_weighted_expectation(f, m, r);
    }
    out -= dense_weighted_expectation(f, m, q);
    out
}

/// Dense `P^W_Q = 1_Q - E^W_Q`: the L2(W)-orthogonal projection onto
/// functions supported on `Q` and orthogonal to the constants `1_Q e`.
/// Equals the sum of all weighted differences strictly inside `Q`.
pub fn dense_complement(f: &Filtration, m: &MatrixMeasure, q: Atom) -> DMatrix<f64> {
    let d = m.dim();
    let n = f.n_leaves() * d;
    let mut out = DMatrix::zeros(n, n);
    for l in f.leaf_span(q) {
        for c in 0..d {
            out[(l * d + c, l * d + c)] = 1.0;
        }
    }
    out - dense_weighted_expectation(f, m, q)
}

/// Sum of dense `Delta^W_Q` over the atoms of one generation.
pub fn dense_rank_delta_sum(f: &Filtration, m: &MatrixMeasure, rank: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(f.n_leaves() * m.dim(), f.n_leaves() * m.dim());
    for q in f.generation(rank) {
        if !f.is_leaf(q) {
            out += dense_weighted_delta(f, m, q);
        }
    }
    out
}

/// Per-atom integrals `int_Q dW f` for a fixed function, indexed by atom.
pub fn atom_integrals(f: &Filtration, m: &MatrixMeasure, fun: &VecFunction) -> Vec<DVector<f64>> {
    f.atoms().map(|q| m.integral(f, fun, q)).collect()
}

/// Per-atom pseudoinverses `W(Q)^{-1}`, indexed by atom.
pub fn aggregate_pinvs(f: &Filtration, m: &MatrixMeasure) -> Vec<DMatrix<f64>> {
    f.atoms()
        .map(|q| {
            linalg::psd_pinv(m.aggregate(q), tol::REL_EIG_CUTOFF)
                .expect("aggregated masses are symmetric")
        })
        .collect()
}

/// `|| Delta^W_Q fun ||_{L2(W)}` from cached integrals and pseudoinverses;
/// the difference is constant on each child, so its squared norm is a sum
/// of child-mass quadratic forms.
pub fn weighted_delta_norm_cached(
    f: &Filtration,
    m: &MatrixMeasure,
    q: Atom,
    integrals: &[DVector<f64>],
    pinvs: &[DMatrix<f64>],
) -> f64 {
    if f.is_leaf(q) {
        return 0.0;
    }
    let avg_q = &pinvs[q.index()] * &integrals[q.index()];
    let mut acc = 0.0;
    for r in f.children(q) {
        let diff = &pinvs[r.index()] * &integrals[r.index()] - &avg_q;
        acc += (m.aggregate(r) * &diff).dot(&diff);
    }
    acc.max(0.0).sqrt()
}

/// An L2(W)-orthonormal basis of the range of `Delta^W_Q`, as columns.
/// Candidates `Delta^W_Q 1_R e` over the children span the range; a Gram
/// eigendecomposition prunes the kernel at the standard relative cutoff.
pub fn weighted_delta_range_basis(f: &Filtration, m: &MatrixMeasure, q: Atom) -> DMatrix<f64> {
    let d = m.dim();
    let n = f.n_leaves() * d;
    if f.is_leaf(q) {
        return DMatrix::zeros(n, 0);
    }
    let mut cand: Vec<DVector<f64>> = Vec::new();
    for r in f.children(q) {
        for c in 0..d {
            let mut e = DVector::zeros(d);
            e[c] = 1.0;
            let ind = VecFunction::indicator(f, d, r, &e);
            cand.push(weighted_delta(f, &ind, q, m).into_vector());
        }
    }
    let k = cand.len();
    let cmat = DMatrix::from_fn(n, k, |i, j| cand[j][i]);
    let dw = m.block_diag();
    let gram = cmat.transpose() * &dw * &cmat;
    let (vals, vecs) = linalg::sym_eigen(&gram);
    let lambda_max = vals.iter().cloned().fold(0.0, f64::max);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..k {
        if vals[j] > tol::REL_EIG_CUTOFF * lambda_max && vals[j] > 0.0 {
            let dir = &cmat * vecs.column(j).clone_owned();
            cols.push(dir / vals[j].sqrt());
        }
    }
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// Worst relative residual of the weighted projection algebra on a few
/// random probe functions: idempotence of `E^W_Q` and `Delta^W_Q`, mutual
/// annihilation, self-adjointness in the W-inner product, and
/// orthogonality of difference ranges across distinct atoms (only nested
/// pairs can interact; disjoint supports vanish identically).
pub fn projection_algebra_residual(f: &Filtration, m: &MatrixMeasure, probes: u64) -> f64 {
    let d = m.dim();
    let mut worst = 0.0f64;
    for p in 0..probes {
        let fun = VecFunction::random(0xE0 + p, f, d);
        let gun = VecFunction::random(0xF0 + p, f, d);
        let fnorm = m.norm(&fun);
        let gnorm = m.norm(&gun);
        let scale = 1.0 + fnorm;
        let deltas: Vec<VecFunction> =
            f.atoms().map(|q| weighted_delta(f, &fun, q, m)).collect();
        let deltas_g: Vec<VecFunction> =
            f.atoms().map(|q| weighted_delta(f, &gun, q, m)).collect();
        for q in f.atoms() {
            let df = &deltas[q.index()];
            let ef = weighted_expectation(f, &fun, q, m);
            // idempotence
            let mut twice = weighted_delta(f, df, q, m);
            *twice.values_mut() -= df.values();
            worst = worst.max(m.norm(&twice) / scale);
            let mut etwice = weighted_expectation(f, &ef, q, m);
            *etwice.values_mut() -= ef.values();
            worst = worst.max(m.norm(&etwice) / scale);
            // mutual annihilation
            worst = worst.max(m.norm(&weighted_expectation(f, df, q, m)) / scale);
            worst = worst.max(m.norm(&weighted_delta(f, &ef, q, m)) / scale);
            // self-adjointness
            let pair_scale = 1.0 + fnorm * gnorm;
            let lhs = m.inner_product(df, &gun);
            let rhs = m.inner_product(&fun, &deltas_g[q.index()]);
            worst = worst.max((lhs - rhs).abs() / pair_scale);
            let le = m.inner_product(&ef, &gun);
            let re = m.inner_product(&fun, &weighted_expectation(f, &gun, q, m));
            worst = worst.max((le - re).abs() / pair_scale);
            // orthogonal ranges along ancestor chains
            for r in f.atoms() {
                if r != q && (f.contains(q, r) || f.contains(r, q)) {
                    let ip = m.inner_product(df, &deltas_g[r.index()]).abs();
                    worst = worst.max(ip / pair_scale);
                }
            }
        }
    }
    worst
}

/// Worst relative defect of the orthogonal decomposition on random probe
/// functions: the energy identity and the reconstruction error.
pub fn decomposition_residual(f: &Filtration, m: &MatrixMeasure, probes: u64) -> f64 {
    let d = m.dim();
    let mut worst = 0.0f64;
    for p in 0..probes {
        let fun = VecFunction::random(0xD0 + p, f, d);
        let norm_sq = m.norm_sq(&fun);
        let parts = decompose(f, &fun, f.root(), m);
        let total: f64 = parts.iter().map(|(_, part)| m.norm_sq(part)).sum();
        worst = worst.max((total - norm_sq).abs() / (1.0 + norm_sq));
        let mut sum = VecFunction::zeros(f, d);
        for (_, part) in &parts {
            *sum.values_mut() += part.values();
        }
        *sum.values_mut() -= fun.values();
        worst = worst.max(m.norm(&sum) / (1.0 + norm_sq.sqrt()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::Branching;
    use crate::measure::random_measure;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn binary(depth: usize) -> Filtration {
        let n = 1 << depth;
        Filtration::build_tree(depth, &Branching::Uniform(2), &vec![1.0; n]).unwrap()
    }

    fn scalar_fn(vals: &[f64]) -> VecFunction {
        VecFunction::from_vector(1, DVector::from_vec(vals.to_vec()))
    }

    fn scalar_measure(f: &Filtration, w: &[f64]) -> MatrixMeasure {
        MatrixMeasure::new(
            f,
            1,
            w.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn expectation_reproduces_constants() {
        let f = binary(2);
        let e = DVector::from_vec(vec![1.5, -0.5]);
        let ind = VecFunction::indicator(&f, 2, f.root(), &e);
        let out = expectation(&f, &ind, f.root());
        assert_abs_diff_eq!(out.values(), ind.values(), epsilon = 1e-14);
    }

    #[test]
    fn expectation_zero_mass_convention() {
        let f = Filtration::build_tree(1, &Branching::Uniform(2), &[0.0, 0.0]).unwrap();
        let fun = scalar_fn(&[3.0, 5.0]);
        let out = expectation(&f, &fun, f.root());
        assert_eq!(out.values().amax(), 0.0);
    }

    #[test]
    fn average_hand_case() {
        let f = binary(1);
        let fun = scalar_fn(&[3.0, 5.0]);
        assert_abs_diff_eq!(average(&f, &fun, f.root())[0], 4.0, epsilon = 1e-14);
        let d = delta(&f, &fun, f.root());
        assert_abs_diff_eq!(d.values()[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.values()[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn delta_annihilates_constants() {
        let f = binary(2);
        let e = DVector::from_vec(vec![2.0]);
        let ind = VecFunction::indicator(&f, 1, f.root(), &e);
        for q in f.atoms() {
            assert_eq!(delta(&f, &ind, q).values().amax(), 0.0);
        }
    }

    #[test]
    fn delta_of_full_mass_single_child_vanishes_ae() {
        // one child carries all of the parent's mass: Delta_Q = 0 in L2(sigma)
        let f = Filtration::build_tree(1, &Branching::Uniform(2), &[2.0, 0.0]).unwrap();
        let fun = scalar_fn(&[3.0, 5.0]);
        let d = delta(&f, &fun, f.root());
        assert_abs_diff_eq!(d.sigma_norm_sq(&f), 0.0, epsilon = 1e-20);
    }

    #[test]
    fn single_child_atom_has_zero_delta() {
        // an atom whose only child is the same set: both averaging
        // operators coincide, so the difference vanishes identically
        let branching = Branching::PerAtom(vec![vec![2], vec![1, 2]]);
        let f = Filtration::build_tree(2, &branching, &[1.5, 0.5, 2.0]).unwrap();
        let thin = f.generation(1).next().unwrap();
        assert_eq!(f.child_count(thin), 1);
        let fun = VecFunction::random(3, &f, 2);
        let m = random_measure(6, &f, 2, 100.0);
        assert!(delta(&f, &fun, thin).values().amax() < 1e-14);
        assert!(weighted_delta(&f, &fun, thin, &m).values().amax() < 1e-12);
    }

    #[test]
    fn weighted_average_examples() {
        let f = binary(1);
        // masses diag(1,0), diag(0,1); f = e1 on leaf 0, e2 on leaf 1
        let m = MatrixMeasure::new(
            &f,
            2,
            vec![
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
                DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])),
            ],
        )
        .unwrap();
        let mut fun = VecFunction::zeros(&f, 2);
        fun.set_leaf(0, &DVector::from_vec(vec![1.0, 0.0]));
        fun.set_leaf(1, &DVector::from_vec(vec![0.0, 1.0]));
        let avg = weighted_average(&f, &fun, f.root(), &m);
        assert_abs_diff_eq!(avg, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn weighted_average_zero_measure() {
        let f = binary(1);
        let m = MatrixMeasure::new(&f, 2, vec![DMatrix::zeros(2, 2); 2]).unwrap();
        let fun = VecFunction::random(4, &f, 2);
        assert_eq!(weighted_average(&f, &fun, f.root(), &m).amax(), 0.0);
    }

    #[test]
    fn weighted_expectation_fixes_range_constants() {
        let f = binary(2);
        let m = random_measure(13, &f, 2, 100.0);
        for q in f.atoms() {
            let e = m.aggregate(q) * DVector::from_vec(vec![0.3, -0.7]); // in ran W(Q)
            let ind = VecFunction::indicator(&f, 2, q, &e);
            let out = weighted_expectation(&f, &ind, q, &m);
            let mut diff = out;
            *diff.values_mut() -= ind.values();
            assert!(m.norm(&diff) <= tol::IDENTITY * (1.0 + m.norm(&ind)));
        }
    }

    #[test]
    fn weighted_delta_kills_constants_in_l2w() {
        let f = binary(2);
        let m = random_measure(17, &f, 2, 1e4);
        let e = DVector::from_vec(vec![1.0, 2.0]);
        let ind = VecFunction::indicator(&f, 2, f.root(), &e);
        for q in f.atoms() {
            let out = weighted_delta(&f, &ind, q, &m);
            assert!(m.norm(&out) <= tol::IDENTITY * (1.0 + m.norm(&ind)));
        }
    }

    #[test]
    fn scalar_weight_reduces_componentwise() {
        let f = binary(2);
        let w = [0.4, 2.5, 1.0, 0.1];
        let m2 = MatrixMeasure::new(
            &f,
            2,
            w.iter().map(|&x| DMatrix::identity(2, 2) * x).collect(),
        )
        .unwrap();
        let m1 = scalar_measure(&f, &w);
        let fun = VecFunction::random(8, &f, 2);
        for q in f.atoms() {
            let full = weighted_delta(&f, &fun, q, &m2);
            for c in 0..2 {
                let comp = scalar_fn(&(0..4).map(|l| fun.leaf(l)[c]).collect::<Vec<_>>());
                let scalar = weighted_delta(&f, &comp, q, &m1);
                for l in 0..4 {
                    assert_abs_diff_eq!(full.leaf(l)[c], scalar.leaf(l)[0], epsilon = 1e-12);
                }
            }
        }
    }

    // Independent dense-formula oracle: builds the weighted averages from
    // the raw definition and compares against the transformer path.
    #[test]
    fn weighted_delta_matches_dense_oracle() {
        let f = binary(1);
        let m = random_measure(23, &f, 2, 100.0);
        let fun = VecFunction::random(5, &f, 2);

        let oracle_exp = |q: Atom| -> DVector<f64> {
            let mut integral = DVector::zeros(2);
            for l in f.leaf_span(q) {
                integral += m.leaf_mass(l) * fun.leaf(l);
            }
            crate::measure::psd_pinv(m.aggregate(q), tol::REL_EIG_CUTOFF).unwrap() * integral
        };
        let root_avg = oracle_exp(f.root());
        let d = weighted_delta(&f, &fun, f.root(), &m);
        for l in 0..2 {
            let expect = oracle_exp(f.leaf_atom(l)) - &root_avg;
            assert_abs_diff_eq!(d.leaf(l).clone_owned(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn dense_matrices_match_transformers() {
        let f = binary(2);
        let m = random_measure(29, &f, 2, 1e3);
        let fun = VecFunction::random(6, &f, 2);
        for q in f.atoms() {
            let dd = dense_weighted_delta(&f, &m, q) * fun.values();
            let tt = weighted_delta(&f, &fun, q, &m);
            assert_abs_diff_eq!(&dd, tt.values(), epsilon = 1e-11);
            let de = dense_weighted_expectation(&f, &m, q) * fun.values();
            let te = weighted_expectation(&f, &fun, q, &m);
            assert_abs_diff_eq!(&de, te.values(), epsilon = 1e-11);
            let du = dense_delta(&f, 2, q) * fun.values();
            let tu = delta(&f, &fun, q);
            assert_abs_diff_eq!(&du, tu.values(), epsilon = 1e-11);
        }
    }

    #[test]
    fn projection_algebra_small() {
        let f = binary(2);
        let m = random_measure(31, &f, 2, 1e4);
        let dw = m.block_diag();
        let scale = 1.0 + dw.amax();
        for q in f.atoms() {
            let e = dense_weighted_expectation(&f, &m, q);
            let d = dense_weighted_delta(&f, &m, q);
            assert!(((&e * &e) - &e).amax() < tol::IDENTITY * scale);
            assert!(((&d * &d) - &d).amax() < tol::IDENTITY * scale);
            assert!((&e * &d).amax() < tol::IDENTITY * scale);
            assert!((&d * &e).amax() < tol::IDENTITY * scale);
            // self-adjoint w.r.t. the W-inner product
            let es = &dw * &e;
            assert!((&es - es.transpose()).amax() < tol::IDENTITY * scale);
            let ds = &dw * &d;
            assert!((&ds - ds.transpose()).amax() < tol::IDENTITY * scale);
        }
        // distinct differences have orthogonal ranges
        let atoms: Vec<Atom> = f.atoms().collect();
        for &q in &atoms {
            for &r in &atoms {
                if q != r {
                    let dq = dense_weighted_delta(&f, &m, q);
                    let dr = dense_weighted_delta(&f, &m, r);
                    assert!((&dq * &dr).amax() < tol::IDENTITY * scale);
                }
            }
        }
    }

    #[test]
    fn sigma_identity_weight_reduces_exactly() {
        let f = Filtration::build_tree(2, &Branching::Uniform(2), &[0.3, 1.2, 0.7, 2.0]).unwrap();
        let m = MatrixMeasure::sigma_identity(&f, 2);
        let fun = VecFunction::random(9, &f, 2);
        for q in f.atoms() {
            let w = weighted_delta(&f, &fun, q, &m);
            let u = delta(&f, &fun, q);
            assert_abs_diff_eq!(w.values(), u.values(), epsilon = 1e-12);
            let we = weighted_expectation(&f, &fun, q, &m);
            let ue = expectation(&f, &fun, q);
            assert_abs_diff_eq!(we.values(), ue.values(), epsilon = 1e-12);
        }
    }

    #[test]
    fn decompose_constant_has_single_part() {
        let f = binary(2);
        let m = random_measure(37, &f, 2, 100.0);
        let e = DVector::from_vec(vec![1.0, -1.0]);
        let ind = VecFunction::indicator(&f, 2, f.root(), &e);
        let parts = decompose(&f, &ind, f.root(), &m);
        let mut nonzero = 0;
        for (label, part) in &parts {
            if m.norm(part) > tol::IDENTITY * (1.0 + m.norm(&ind)) {
                nonzero += 1;
                assert!(matches!(label, Component::Average(_)));
            }
        }
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn decompose_pythagoras_and_reconstruction() {
        let f = binary(3);
        let m = random_measure(41, &f, 2, 1e4);
        let fun = VecFunction::random(10, &f, 2);
        let parts = decompose(&f, &fun, f.root(), &m);
        let total: f64 = parts.iter().map(|(_, p)| m.norm_sq(p)).sum();
        let norm_sq = m.norm_sq(&fun);
        assert_abs_diff_eq!(total, norm_sq, epsilon = 1e-10 * (1.0 + norm_sq));
        let mut sum = VecFunction::zeros(&f, 2);
        for (_, p) in &parts {
            *sum.values_mut() += p.values();
        }
        *sum.values_mut() -= fun.values();
        assert!(m.norm(&sum) <= 1e-10 * (1.0 + m.norm(&fun)));
    }

    #[test]
    fn delta_range_basis_is_orthonormal() {
        let f = binary(2);
        let m = random_measure(43, &f, 2, 1e4);
        let dw = m.block_diag();
        for q in f.atoms() {
            let b = weighted_delta_range_basis(&f, &m, q);
            let gram = b.transpose() * &dw * &b;
            let k = gram.nrows();
            assert!((gram - DMatrix::identity(k, k)).amax() < 1e-9);
        }
    }
}
