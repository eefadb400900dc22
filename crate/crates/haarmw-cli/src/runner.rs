//! The certificate sweep: for every instance of the configured grid, emit
//! the selected certificate families, deterministically.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use haarmw::analysis::{self, Variant};
use haarmw::martingale;
use haarmw::measure::VecFunction;
use haarmw::paraproduct::{self, Side};
use haarmw::{tol, Certificate, InstanceParams};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::formats::CertificateRecord;
use crate::instance::{self, Instance, TupleKey};

/// Run the configured sweep and return the sorted certificate records.
pub fn run_config(cfg: &ExperimentConfig) -> Result<Vec<CertificateRecord>> {
    let keys = instance::enumerate(cfg);
    let variants = cfg.variant_set();
    let mut records: Vec<CertificateRecord> = keys
        .par_iter()
        .map(|&key| run_tuple(cfg, key, &variants))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(records)
}

fn run_tuple(
    cfg: &ExperimentConfig,
    key: TupleKey,
    variants: &BTreeSet<String>,
) -> Result<Vec<CertificateRecord>> {
    let mut inst = instance::generate(key, cfg.condition_cap);
    if let Some(mode) = &cfg.sabotage {
        inst.op = instance::sabotage(&inst, mode);
    }
    let certs = emit_certificates(&inst, variants);
    Ok(certs.iter().map(CertificateRecord::from_certificate).collect())
}

/// Evaluate the selected certificate families on one instance.
pub fn emit_certificates(inst: &Instance, variants: &BTreeSet<String>) -> Vec<Certificate> {
    let want = |name: &str| variants.contains(name);
    let f = &inst.filtration;
    let (w, v, t) = (&inst.w, &inst.v, &inst.op);
    let d = inst.key.dim;
    let r = t.complexity();
    let params = InstanceParams {
        seed: inst.key.seed,
        dim: d,
        depth: inst.key.depth,
        branching: inst.key.branching,
        complexity: r,
        tag: inst.tag(),
    };
    let mut out: Vec<Certificate> = Vec::new();

    let needs_norm = ["thm-well-loc-rel", "thm-well-loc-est", "thm-band-rel", "ft-le-norm", "nec"]
        .iter()
        .any(|n| want(n));
    let needs_a2 = ["thm-band-rel", "block-bound", "truncation-gap", "nec", "test-haar"]
        .iter()
        .any(|n| want(n));
    let needs_rel = want("thm-well-loc-rel") || want("ft-le-norm");
    let needs_est = want("thm-well-loc-est") || want("ft-le-norm") || want("test-haar")
        || want("est-tk");
    let needs_band = want("thm-band-rel") || want("nec") || want("test-haar");

    let norm = needs_norm
        .then(|| analysis::weighted_norm(&t.dense_weighted(f, w), w, v))
        .unwrap_or(0.0);
    let a2 = needs_a2
        .then(|| analysis::a2_characteristic(v, w, f).expect("instances keep positive mass"))
        .unwrap_or(0.0);
    let rel = needs_rel.then(|| analysis::testing_constants(f, t, w, v, Variant::Restricted));
    let est = needs_est.then(|| analysis::testing_constants(f, t, w, v, Variant::Truncated));
    let band = needs_band.then(|| analysis::testing_constants(f, t, w, v, Variant::BlockTruncated));

    if want("projection-algebra") {
        let res = martingale::projection_algebra_residual(f, w, 2)
            .max(martingale::projection_algebra_residual(f, v, 2));
        out.push(Certificate::evaluate("projection-algebra", res, tol::SWEEP));
    }
    if want("pythagoras") {
        let res = martingale::decomposition_residual(f, w, 2)
            .max(martingale::decomposition_residual(f, v, 2));
        out.push(Certificate::evaluate("pythagoras", res, tol::SWEEP));
    }
    if want("well-localized") {
        let rep = t.check_well_localized(f, w, v, r);
        out.push(Certificate::evaluate("well-localized", rep.max_residual, tol::SWEEP));
    }
    if want("t-para") {
        let rep = t.check_shift_invariance(f, w, v);
        out.push(Certificate::evaluate("t-para", rep.max_residual, tol::SWEEP));
    }

    let needs_pi = want("replacement") || want("para-two-path") || want("para-orthogonal")
        || want("para-bound");
    let pi_w = needs_pi.then(|| paraproduct::build_paraproduct(f, t, w, v, Side::W));

    if want("replacement") {
        let pi = pi_w.as_ref().expect("built above");
        let rep = paraproduct::check_replacement(f, t, w, v, pi);
        let res = rep.clause_residuals.iter().cloned().fold(0.0, f64::max);
        out.push(Certificate::evaluate("replacement", res, tol::SWEEP));
        let pi_v = paraproduct::build_paraproduct(f, t, w, v, Side::V);
        let combined = paraproduct::check_combined_identity(f, t, w, v, pi, &pi_v);
        out.push(Certificate::evaluate("replacement-combined", combined, tol::SWEEP));
    }
    if want("para-two-path") {
        let pi = pi_w.as_ref().expect("built above");
        let alt = paraproduct::build_paraproduct_alt(f, t, w, v, Side::W);
        let res = (&pi.matrix - &alt.matrix).amax() / (1.0 + pi.matrix.amax());
        out.push(Certificate::evaluate("para-two-path", res, tol::SWEEP));
    }
    if want("para-orthogonal") {
        let pi = pi_w.as_ref().expect("built above");
        let res = paraproduct::check_output_orthogonality(f, pi, w, v, 2);
        out.push(Certificate::evaluate("para-orthogonal", res, tol::SWEEP));
    }
    if want("para-bound") {
        let pi = pi_w.as_ref().expect("built above");
        let (t1, _) = paraproduct::square_sum_testing_constant(f, t, w, v);
        out.push(paraproduct::paraproduct_norm_bound(pi, w, v, t1));
    }
    if want("carleson") {
        let a_seq = instance::carleson_sequence(inst);
        let res = analysis::carleson_constants(f, w, &a_seq);
        out.push(res.lower);
        out.push(res.upper);
    }
    if want("thm-well-loc-rel") {
        let tc = rel.as_ref().expect("computed above");
        out.push(analysis::theorem_bound_restricted(tc, norm, r, d));
    }
    if want("thm-well-loc-est") {
        let tc = est.as_ref().expect("computed above");
        out.push(analysis::theorem_bound_truncated(tc, norm, r, d));
    }
    if want("thm-band-rel") {
        let tc = band.as_ref().expect("computed above");
        out.push(analysis::theorem_bound_block(tc, norm, a2, r, d));
    }
    if want("ft-le-norm") {
        for tc in [rel.as_ref(), est.as_ref()].into_iter().flatten() {
            out.extend(analysis::monotonicity_certificates(tc, norm));
        }
    }
    if want("block-bound") {
        out.push(analysis::lemma_block_bound(f, t, w, v, a2));
    }
    if want("truncation-gap") {
        out.push(analysis::lemma_truncation_gap(f, t, w, v, a2));
    }
    if want("nec") {
        out.push(analysis::lemma_nec_gap(f, t, w, v, a2));
        let tc = band.as_ref().expect("computed above");
        out.push(analysis::corollary_nec_testing(f, tc, norm, d, a2));
    }
    if want("test-haar") {
        let tc = est.as_ref().expect("computed above");
        let bc = band.as_ref().expect("computed above");
        out.extend(analysis::lemma_test_haar(f, t, w, v, tc, bc.t1, a2));
    }
    if want("est-tk") {
        let tc = est.as_ref().expect("computed above");
        out.push(analysis::est_tk_certificate(f, t, w, v, tc.t2));
    }
    if want("oracle") && d == 1 && inst.key.depth <= 2 {
        out.push(Certificate::evaluate("oracle", oracle_residual(inst), 1e-8));
    }

    out.into_iter().map(|c| c.with_params(params.clone())).collect()
}

/// Independent brute-force check for small scalar instances: direct
/// triple-sum application on random functions and a power-iteration norm,
/// both against the dense/SVD path. Returns the worst relative error.
pub fn oracle_residual(inst: &Instance) -> f64 {
    let f = &inst.filtration;
    let (w, v, t) = (&inst.w, &inst.v, &inst.op);
    let n = f.n_leaves();
    let mut worst = 0.0f64;

    // kernel table by ancestor navigation only
    let mut kernel = vec![vec![0.0f64; n]; n];
    for b in t.blocks() {
        let cells = f.ch_r(b.owner, b.grid_depth).expect("valid block");
        let cell_of = |leaf: usize| -> Option<usize> {
            let la = f.leaf_atom(leaf);
            let hops = f.rank(la) - (f.rank(b.owner) + b.grid_depth);
            let anc = f.ancestor(la, hops).expect("within the tree");
            cells.iter().position(|&c| c == anc)
        };
        for lx in 0..n {
            let Some(i) = cell_of(lx) else { continue };
            for ly in 0..n {
                let Some(j) = cell_of(ly) else { continue };
                kernel[lx][ly] += b.grid[(i, j)];
            }
        }
    }

    // application against the triple sum
    for probe in 0..3u64 {
        let fun = VecFunction::random(0x0BAC + probe, f, 1);
        let got = t.apply_weighted(f, w, &fun);
        for lx in 0..n {
            let mut expect = 0.0;
            for ly in 0..n {
                expect += kernel[lx][ly] * w.leaf_mass(ly)[(0, 0)] * fun.values()[ly];
            }
            let scale = 1.0 + expect.abs();
            worst = worst.max((got.values()[lx] - expect).abs() / scale);
        }
    }

    // norm by power iteration on the conjugated matrix
    let mut a = vec![vec![0.0f64; n]; n];
    for lx in 0..n {
        for ly in 0..n {
            a[lx][ly] =
                v.leaf_mass(lx)[(0, 0)].sqrt() * kernel[lx][ly] * w.leaf_mass(ly)[(0, 0)].sqrt();
        }
    }
    let svd = analysis::weighted_norm(&t.dense_weighted(f, w), w, v);
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.37).collect();
    let mut estimate = 0.0;
    let mut previous = -1.0;
    for iter in 0..200_000u32 {
        // y = A x, then z = A^T y
        let y: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a[i][j] * x[j]).sum())
            .collect();
        let z: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| a[i][j] * y[i]).sum())
            .collect();
        let nz: f64 = z.iter().map(|u| u * u).sum::<f64>().sqrt();
        if nz == 0.0 {
            estimate = 0.0;
            break;
        }
        let ny: f64 = y.iter().map(|u| u * u).sum::<f64>().sqrt();
        let nx: f64 = x.iter().map(|u| u * u).sum::<f64>().sqrt();
        estimate = ny / nx;
        x = z.iter().map(|u| u / nz).collect();
        if iter % 128 == 0 {
            if (estimate - previous).abs() <= 1e-13 * (1.0 + estimate) {
                break;
            }
            previous = estimate;
        }
    }
    worst = worst.max((estimate - svd).abs() / (1.0 + svd));
    worst
}

/// Write instance files (tree, measures, operator) for a tuple.
pub fn write_instance(dir: &Path, inst: &Instance) -> Result<()> {
    let stem = inst.key.stem();
    let tree = instance::TreeSpec::from_instance(inst);
    let measures = instance::MeasuresSpec::from_instance(inst);
    let op = instance::OperatorSpec::from_operator(&inst.filtration, &inst.op);
    write_pretty(&dir.join(format!("{stem}.tree.json")), &tree)?;
    write_pretty(&dir.join(format!("{stem}.measures.json")), &measures)?;
    write_pretty(&dir.join(format!("{stem}.op.json")), &op)?;
    Ok(())
}

fn write_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Generate all instance files for a config.
pub fn generate_files(cfg: &ExperimentConfig, dir: &Path) -> Result<usize> {
    std::fs::create_dir_all(dir)?;
    let keys = instance::enumerate(cfg);
    for &key in &keys {
        let mut inst = instance::generate(key, cfg.condition_cap);
        if let Some(mode) = &cfg.sabotage {
            inst.op = instance::sabotage(&inst, mode);
        }
        write_instance(dir, &inst)?;
    }
    Ok(keys.len())
}

/// Dump the first failing certificate and its instance files for
/// inspection; returns the witness directory.
pub fn dump_witness(
    cfg: &ExperimentConfig,
    records: &[CertificateRecord],
    out_dir: &Path,
) -> Result<Option<std::path::PathBuf>> {
    let Some(first_fail) = records.iter().find(|r| !r.pass) else {
        return Ok(None);
    };
    let dir = out_dir.join("witness");
    std::fs::create_dir_all(&dir)?;
    let key = TupleKey {
        seed: first_fail.seed,
        dim: first_fail.dim,
        depth: first_fail.depth,
        branching: first_fail.branching,
        complexity: first_fail.complexity,
    };
    let mut inst = instance::generate(key, cfg.condition_cap);
    if let Some(mode) = &cfg.sabotage {
        inst.op = instance::sabotage(&inst, mode);
    }
    write_instance(&dir, &inst)?;
    let mut text = serde_json::to_string_pretty(first_fail)?;
    text.push('\n');
    std::fs::write(dir.join("failing-certificate.json"), text)?;
    Ok(Some(dir))
}
