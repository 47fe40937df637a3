//! Synthetic identity datasets: unit-sphere prototypes, per-camera offsets and
//! isotropic noise. Also the dataset TSV format and query/gallery splitting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Instance, Provenance};
use crate::error::{Error, Result};
use crate::eval::RetrievalSplit;
use crate::linalg::{dot_slice, l2_normalize, seeded_rng};

const GENERATOR_NAME: &str = "sphere-prototypes-v1";
const MAX_PROTOTYPE_SIMILARITY: f64 = 0.95;
const MAX_PROTOTYPE_DRAWS: usize = 100_000;
const MAX_SPLIT_ATTEMPTS: usize = 64;

/// Generator parameters. Both sigmas are expected Euclidean norms: each
/// coordinate is drawn with standard deviation `sigma / sqrt(d_in)`, so a
/// value of 0.3 means "noise about 30% as long as the unit prototype".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub n_ids: usize,
    pub per_id: usize,
    pub d_in: usize,
    pub noise_sigma: f64,
    #[serde(default = "default_cameras")]
    pub n_cameras: usize,
    #[serde(default)]
    pub camera_shift_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_cameras() -> usize {
    1
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_ids == 0 || self.per_id == 0 || self.d_in == 0 || self.n_cameras == 0 {
            return Err(Error::invalid("n_ids, per_id, d_in and n_cameras must be >= 1"));
        }
        for (name, s) in [
            ("noise_sigma", self.noise_sigma),
            ("camera_shift_sigma", self.camera_shift_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

fn gaussian<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn draw_prototypes<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut draws = 0;
    while protos.len() < n {
        draws += 1;
        if draws > MAX_PROTOTYPE_DRAWS {
            return Err(Error::invalid(format!(
                "could not place {n} prototypes in {dim} dimensions with pairwise cosine <= {MAX_PROTOTYPE_SIMILARITY}"
            )));
        }
        let candidate = match l2_normalize(&gaussian(rng, dim, 1.0)) {
            Ok(v) => v.into_values(),
            Err(_) => continue,
        };
        if protos
            .iter()
            .all(|p| dot_slice(p, &candidate) <= MAX_PROTOTYPE_SIMILARITY)
        {
            protos.push(candidate);
        }
    }
    Ok(protos)
}

pub fn generate(params: &GenParams) -> Result<Dataset> {
    params.validate()?;
    let mut rng = seeded_rng(params.seed);
    let d = params.d_in;
    let coord_scale = 1.0 / (d as f64).sqrt();

    let prototypes = draw_prototypes(&mut rng, params.n_ids, d)?;
    let offsets: Vec<Vec<f64>> = (0..params.n_cameras)
        .map(|_| gaussian(&mut rng, d, params.camera_shift_sigma * coord_scale))
        .collect();

    let mut instances = Vec::with_capacity(params.n_ids * params.per_id);
    for (identity, proto) in prototypes.iter().enumerate() {
        for j in 0..params.per_id {
            let camera = j % params.n_cameras;
            let noise = gaussian(&mut rng, d, params.noise_sigma * coord_scale);
            let raw = proto
                .iter()
                .zip(&offsets[camera])
                .zip(&noise)
                .map(|((p, o), n)| p + o + n)
                .collect();
            instances.push(Instance::new(instances.len(), raw, identity, camera));
        }
    }

    Dataset::new(
        instances,
        Some(Provenance {
            generator: GENERATOR_NAME.to_string(),
            params: params.clone(),
        }),
    )
}

pub fn to_tsv(dataset: &Dataset) -> String {
    let mut out = String::new();
    out.push_str("id\tidentity\tcamera");
    for j in 0..dataset.d_in() {
        let _ = write!(out, "\tf{j}");
    }
    out.push('\n');
    for inst in dataset.instances() {
        let _ = write!(out, "{}\t{}\t{}", inst.id, inst.identity(), inst.camera());
        for x in &inst.raw {
            // 17 significant digits round-trip every f64 exactly.
            let _ = write!(out, "\t{x:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_tsv(dataset)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&text, path)
}

pub fn parse_tsv(text: &str, path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 4 || cols[..3] != ["id", "identity", "camera"] {
        return Err(parse_err(
            1,
            "header must start with id<TAB>identity<TAB>camera followed by f0..".into(),
        ));
    }
    for (j, c) in cols[3..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(1, format!("expected column f{j}, found {c:?}")));
        }
    }
    let d_in = cols.len() - 3;

    let mut instances = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                lineno,
                format!("expected {} columns, found {}", cols.len(), fields.len()),
            ));
        }
        let int = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|e| parse_err(lineno, format!("bad {what} {s:?}: {e}")))
        };
        let id = int(fields[0], "id")?;
        let identity = int(fields[1], "identity")?;
        let camera = int(fields[2], "camera")?;
        let raw = fields[3..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| parse_err(lineno, format!("bad value {s:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if id != instances.len() {
            return Err(parse_err(
                lineno,
                format!("expected id {}, found {id}", instances.len()),
            ));
        }
        debug_assert_eq!(raw.len(), d_in);
        instances.push(Instance::new(id, raw, identity, camera));
    }
    if instances.is_empty() {
        return Err(Error::EmptyInput);
    }
    Dataset::new(instances, None)
}

/// Splits each identity's instances into query and gallery.
///
/// Each identity with at least two instances contributes
/// `ceil(query_fraction * n)` queries (at most `n - 1`). Singletons go to the
/// gallery as distractors. With `junk_rule`, every query must keep a
/// same-identity gallery item from a different camera, since same-camera
/// matches are excluded at evaluation time.
pub fn make_split<R: Rng>(
    dataset: &Dataset,
    query_fraction: f64,
    junk_rule: bool,
    rng: &mut R,
) -> Result<RetrievalSplit> {
    if !(query_fraction > 0.0 && query_fraction < 1.0) {
        return Err(Error::invalid("query_fraction must be in (0, 1)"));
    }
    let mut by_identity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for inst in dataset.instances() {
        by_identity.entry(inst.identity()).or_default().push(inst.id);
    }

    let camera = |id: usize| dataset.instances()[id].camera();
    let mut query = Vec::new();
    let mut gallery = Vec::new();
    for (&identity, members) in &by_identity {
        let n = members.len();
        if n < 2 {
            gallery.extend_from_slice(members);
            continue;
        }
        let n_query = ((query_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
        let mut order = members.clone();
        let mut found = false;
        for _ in 0..MAX_SPLIT_ATTEMPTS {
            order.shuffle(rng);
            let (q, g) = order.split_at(n_query);
            let ok = q
                .iter()
                .all(|&qi| !junk_rule || g.iter().any(|&gi| camera(gi) != camera(qi)));
            if ok {
                query.extend_from_slice(q);
                gallery.extend_from_slice(g);
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::NoCrossCameraRelevants { identity });
        }
    }
    query.sort_unstable();
    gallery.sort_unstable();
    Ok(RetrievalSplit { query, gallery })
}
