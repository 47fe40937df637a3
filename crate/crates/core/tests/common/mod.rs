//! Reference implementations and random-instance generators shared by the
//! integration tests and the acceptance harness.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cluster_contrast::datagen::{generate, make_split, GenParams};
use cluster_contrast::eval::{EvalOptions, RetrievalSplit};
use cluster_contrast::linalg::seeded_rng;
use cluster_contrast::{
    cluster_nce, l2_normalize, ClusterMemory, Dataset, DbscanParams, Encoder, FeatureVector, Instance, InstanceMemory,
    LossConfig, PseudoLabeling,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit(rng: &mut ChaCha8Rng, d: usize) -> FeatureVector {
    loop {
        if let Ok(v) = l2_normalize(&gaussian(rng, d)) {
            return v;
        }
    }
}

// ---------------------------------------------------------------- DBSCAN

/// A random DBSCAN problem: blobs on the sphere, occasional duplicates, and
/// an eps drawn from the pairwise-distance distribution.
pub struct DbscanCase {
    pub features: Vec<FeatureVector>,
    pub params: DbscanParams,
}

pub fn random_dbscan_case(rng: &mut ChaCha8Rng, max_n: usize) -> DbscanCase {
    let n = rng.random_range(1..=max_n);
    let d = rng.random_range(2..=6);
    let centers: Vec<FeatureVector> = (0..rng.random_range(1..=6)).map(|_| unit(rng, d)).collect();
    let spread: f64 = rng.random_range(0.05..0.6);
    let mut features: Vec<FeatureVector> = Vec::with_capacity(n);
    for _ in 0..n {
        if !features.is_empty() && rng.random_bool(0.05) {
            let j = rng.random_range(0..features.len());
            features.push(features[j].clone());
            continue;
        }
        let c = &centers[rng.random_range(0..centers.len())];
        let noise = gaussian(rng, d);
        let raw: Vec<f64> = c
            .values()
            .iter()
            .zip(&noise)
            .map(|(x, z)| x + spread * z / (d as f64).sqrt())
            .collect();
        features.push(l2_normalize(&raw).unwrap_or_else(|_| c.clone()));
    }
    let mut dists: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            dists.push(1.0 - dot(features[i].values(), features[j].values()));
        }
    }
    dists.sort_by(f64::total_cmp);
    let eps = if dists.is_empty() {
        0.1
    } else {
        let q: f64 = rng.random_range(0.0..0.4);
        dists[((dists.len() - 1) as f64 * q) as usize].max(1e-9)
    };
    DbscanCase {
        features,
        params: DbscanParams {
            eps,
            min_pts: rng.random_range(1..=6),
        },
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// DBSCAN by definition: core points from a full neighbor count, clusters
/// as connected components of the core graph, border points attached to the
/// adjacent component with the smallest core id.
pub fn dbscan_reference(features: &[FeatureVector], params: &DbscanParams) -> (BTreeSet<Vec<usize>>, BTreeSet<usize>) {
    let n = features.len();
    let near = |i: usize, j: usize| 1.0 - dot(features[i].values(), features[j].values()) <= params.eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= params.min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut min_core: BTreeMap<usize, usize> = BTreeMap::new();
    for i in (0..n).filter(|&i| core[i]) {
        let r = find(&mut parent, i);
        let e = min_core.entry(r).or_insert(i);
        *e = (*e).min(i);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut outliers = BTreeSet::new();
    for i in 0..n {
        let label = if core[i] {
            Some(find(&mut parent, i))
        } else {
            (0..n)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| find(&mut parent, j))
                .min_by_key(|r| min_core[r])
        };
        match label {
            Some(r) => groups.entry(r).or_default().push(i),
            None => {
                outliers.insert(i);
            }
        }
    }
    (groups.into_values().collect(), outliers)
}

/// Canonical cluster ids: clusters numbered by ascending smallest member.
pub fn canonical_labels(partition: &BTreeSet<Vec<usize>>) -> BTreeMap<usize, usize> {
    let mut clusters: Vec<&Vec<usize>> = partition.iter().collect();
    clusters.sort_by_key(|c| c[0]);
    let mut out = BTreeMap::new();
    for (k, c) in clusters.iter().enumerate() {
        for &i in c.iter() {
            out.insert(i, k);
        }
    }
    out
}

pub fn dbscan_matches(case: &DbscanCase, got: &PseudoLabeling) -> bool {
    let (partition, outliers) = dbscan_reference(&case.features, &case.params);
    let want = canonical_labels(&partition);
    got.k() == partition.len() && *got.assignments() == want && *got.outliers() == outliers
}

// ------------------------------------------------------------ retrieval

pub struct RetrievalCase {
    pub dataset: Dataset,
    pub features: Vec<FeatureVector>,
    pub split: RetrievalSplit,
    pub opts: EvalOptions,
}

/// Random items with coarsely quantized features so that score ties occur.
pub fn random_retrieval_case(rng: &mut ChaCha8Rng, max_n: usize) -> RetrievalCase {
    let n = rng.random_range(2..=max_n);
    let d = rng.random_range(2..=4);
    let n_ids = rng.random_range(1..=(n / 2).max(1));
    let n_cams = rng.random_range(1..=3);
    let levels = rng.random_range(1..=4) as f64;
    let mut instances = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    for id in 0..n {
        let raw: Vec<f64> = loop {
            let v: Vec<f64> = (0..d)
                .map(|_| (rng.random_range(-1.0..1.0f64) * levels).round())
                .collect();
            if v.iter().any(|x| *x != 0.0) {
                break v;
            }
        };
        features.push(l2_normalize(&raw.clone()).unwrap());
        instances.push(Instance::new(
            id,
            raw,
            rng.random_range(0..n_ids),
            rng.random_range(0..n_cams),
        ));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let n_query = rng.random_range(1..n);
    let mut query = ids[..n_query].to_vec();
    let mut gallery = ids[n_query..].to_vec();
    query.sort_unstable();
    gallery.sort_unstable();
    RetrievalCase {
        dataset: Dataset::new(instances, None).unwrap(),
        features,
        split: RetrievalSplit { query, gallery },
        opts: EvalOptions {
            junk_rule: rng.random_bool(0.7),
            max_rank: rng.random_range(1..=12),
        },
    }
}

pub struct ReferenceMetrics {
    pub map: f64,
    pub cmc: Vec<f64>,
    pub evaluated: usize,
    pub skipped: usize,
}

/// mAP and CMC by definition: full ranking per query, then precision at
/// every relevant position counted from scratch.
pub fn retrieval_reference(case: &RetrievalCase) -> Option<ReferenceMetrics> {
    let inst = case.dataset.instances();
    let mut ap_sum = 0.0;
    let mut evaluated = 0usize;
    let mut first_hits = Vec::new();
    for &q in &case.split.query {
        let (qi, qc) = (inst[q].identity(), inst[q].camera());
        let mut ranked: Vec<(f64, usize)> = case
            .split
            .gallery
            .iter()
            .filter(|&&g| !(case.opts.junk_rule && inst[g].identity() == qi && inst[g].camera() == qc))
            .map(|&g| (dot(case.features[q].values(), case.features[g].values()), g))
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let relevant: Vec<bool> = ranked.iter().map(|&(_, g)| inst[g].identity() == qi).collect();
        let n_rel = relevant.iter().filter(|&&r| r).count();
        if n_rel == 0 {
            continue;
        }
        let mut precision_sum = 0.0;
        for k in 0..ranked.len() {
            if relevant[k] {
                let hits_in_top = relevant[..=k].iter().filter(|&&r| r).count();
                precision_sum += hits_in_top as f64 / (k + 1) as f64;
            }
        }
        ap_sum += precision_sum / n_rel as f64;
        evaluated += 1;
        first_hits.push(relevant.iter().position(|&r| r).unwrap() + 1);
    }
    if evaluated == 0 {
        return None;
    }
    let cmc = (1..=case.opts.max_rank)
        .map(|r| first_hits.iter().filter(|&&h| h <= r).count() as f64 / evaluated as f64)
        .collect();
    Some(ReferenceMetrics {
        map: ap_sum / evaluated as f64,
        cmc,
        evaluated,
        skipped: case.split.query.len() - evaluated,
    })
}

pub fn retrieval_matches(case: &RetrievalCase) -> bool {
    let got = cluster_contrast::eval::evaluate_features(&case.features, &case.dataset, &case.split, &case.opts);
    match (retrieval_reference(case), got) {
        (None, Err(cluster_contrast::Error::NoValidQueries { .. })) => true,
        (Some(want), Ok(got)) => {
            got.map == want.map
                && got.cmc == want.cmc
                && got.evaluated_queries == want.evaluated
                && got.skipped_queries == want.skipped
        }
        _ => false,
    }
}

// ------------------------------------------------------------- gradients

/// Worst relative error between the analytic and central-difference
/// gradient of `cluster_nce(forward(raw))` over all weights and biases.
pub fn gradient_check(rng: &mut ChaCha8Rng, tau: f64) -> f64 {
    const H: f64 = 1e-6;
    let d_in = rng.random_range(2..=8);
    let d_out = rng.random_range(2..=8);
    let k = rng.random_range(2..=8);
    let mut enc = Encoder::init(d_out, d_in, rng).unwrap();
    for b in enc.params_mut().iter_mut().skip(d_out * d_in) {
        *b = rng.random_range(-0.3..0.3);
    }
    let reps: Vec<FeatureVector> = (0..k).map(|_| unit(rng, d_out)).collect();
    let memory = ClusterMemory::from_reps(reps, 0.1).unwrap();
    let positive = rng.random_range(0..k);
    let raw = gaussian(rng, d_in);
    let cfg = LossConfig { tau };

    let loss_at = |enc: &Encoder| cluster_nce(&enc.forward(&raw).unwrap(), &memory, positive, &cfg).unwrap();
    let analytic = enc.backward(&raw, &loss_at(&enc).grad_q).unwrap();

    let mut worst: f64 = 0.0;
    for p in 0..enc.params().len() {
        let orig = enc.params()[p];
        enc.params_mut()[p] = orig + H;
        let plus = loss_at(&enc).value;
        enc.params_mut()[p] = orig - H;
        let minus = loss_at(&enc).value;
        enc.params_mut()[p] = orig;
        let numeric = (plus - minus) / (2.0 * H);
        let a = analytic.0[p];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}

// --------------------------------------------------------------- memory

pub fn random_labeling(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PseudoLabeling {
    let labels: Vec<(usize, usize)> = (0..n)
        .map(|i| (i, if i < k { i } else { rng.random_range(0..k) }))
        .collect();
    PseudoLabeling::from_raw_labels(labels, std::iter::empty()).unwrap()
}

/// Property checks on both memories over one random case; returns a
/// description of the first violation.
pub fn memory_properties(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let d = rng.random_range(2..=8);
    let k = rng.random_range(1..=5);
    let n = k + rng.random_range(0..10);
    let features: Vec<FeatureVector> = (0..n).map(|_| unit(rng, d)).collect();
    let labeling = random_labeling(rng, n, k);
    let m: f64 = rng.random_range(0.0..1.0);
    let queries: Vec<(FeatureVector, usize)> = (0..rng.random_range(1..12))
        .map(|_| (unit(rng, d), rng.random_range(0..k)))
        .collect();

    let mut cm = ClusterMemory::init(&features, &labeling, m).map_err(|e| e.to_string())?;
    cm.batch_update(queries.iter().map(|(q, c)| (q, *c)))
        .map_err(|e| e.to_string())?;
    if let Some(bad) = cm.reps().iter().find(|r| (r.norm() - 1.0).abs() > 1e-9) {
        return Err(format!("cluster representative norm {}", bad.norm()));
    }

    let members = labeling.members();
    let mut im = InstanceMemory::init(&features, &labeling, m).map_err(|e| e.to_string())?;
    for (q, c) in &queries {
        let id = members[*c][rng.random_range(0..members[*c].len())];
        im.instance_update(id, q).map_err(|e| e.to_string())?;
    }
    for id in 0..n {
        let f = im.feature(id).map_err(|e| e.to_string())?;
        if (f.norm() - 1.0).abs() > 1e-9 {
            return Err(format!("instance feature norm {}", f.norm()));
        }
    }

    // m = 1 freezes, m = 0 replaces.
    let (q, c) = &queries[0];
    let mut frozen = ClusterMemory::init(&features, &labeling, 1.0).unwrap();
    let before = frozen.rep(*c).unwrap().clone();
    frozen.momentum_update(q, *c).unwrap();
    if max_abs_diff(frozen.rep(*c).unwrap(), &before) > 1e-12 {
        return Err("m = 1 changed a representative".into());
    }
    let mut replaced = ClusterMemory::init(&features, &labeling, 0.0).unwrap();
    replaced.momentum_update(q, *c).unwrap();
    if max_abs_diff(replaced.rep(*c).unwrap(), q) > 1e-12 {
        return Err("m = 0 did not replace the representative".into());
    }

    // Singleton clusters: the two memories coincide.
    let singles = PseudoLabeling::from_raw_labels((0..n).map(|i| (i, i)), std::iter::empty()).unwrap();
    let mut cs = ClusterMemory::init(&features, &singles, m).unwrap();
    let mut is = InstanceMemory::init(&features, &singles, m).unwrap();
    for (q, _) in &queries {
        let id = rng.random_range(0..n);
        cs.momentum_update(q, id).unwrap();
        is.instance_update(id, q).unwrap();
    }
    let centroids = is.centroids().unwrap();
    for (a, b) in cs.reps().iter().zip(&centroids) {
        if max_abs_diff(a, b) > 1e-12 {
            return Err("singleton cluster memory diverged from instance memory".into());
        }
    }
    Ok(())
}

pub fn max_abs_diff(a: &FeatureVector, b: &FeatureVector) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ------------------------------------------------------------- fixtures

/// Well-separated identities: DBSCAN recovers the ground truth from the
/// first epoch.
pub fn separable_params() -> GenParams {
    GenParams {
        n_ids: 32,
        per_id: 20,
        d_in: 32,
        noise_sigma: 0.1,
        n_cameras: 4,
        camera_shift_sigma: 0.1,
        seed: 7,
    }
}

pub fn fixture(params: &GenParams, split_seed: u64) -> (Dataset, RetrievalSplit) {
    let d = generate(params).unwrap();
    let split = make_split(&d, 0.2, true, &mut seeded_rng(split_seed)).unwrap();
    (d, split)
}
