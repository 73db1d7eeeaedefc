//! Coverage against complexity over every AP subset drawn from a set of
//! candidate AP sites.

use std::io::Write;
use std::time::Instant;

use crate::channel::observe;
use crate::error::{Error, Result};
use crate::exec;
use crate::fim::{efim_quadruplet_ref, efim_triplet};
use crate::pipeline::{egs_report, polo1_estimate, polo2_estimate, PipelineConfig};
use crate::scenario::{Scenario, SeededRng};
use crate::selection::{cell_centers, QuadChoice, TripletChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeoffMethod {
    Polo1,
    Polo2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffSettings {
    /// Mean intra distance above which subsets are discarded, meters.
    pub gamma: f64,
    /// UE grid for PEB coverage, meters.
    pub coverage_res: f64,
    /// Sparse UE grid for runtime and evaluation counts, meters.
    pub ue_res: f64,
    /// Resolution of the EGS baseline, wavelengths.
    pub egs_k: f64,
}

/// One scored AP subset.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    /// Reference first for triplets; `a1, b1, a2, b2` for quadruplets.
    pub subset: Vec<usize>,
    /// Fraction of the coverage grid with subset PEB below one wavelength.
    pub coverage: f64,
    /// Mean estimator wall time over the UE sample, relative to one EGS run.
    pub norm_wall_time: f64,
    /// Mean ML evaluations over the UE sample, relative to the EGS grid size.
    pub norm_evals: f64,
    pub mean_intra: f64,
    /// Quadruplets only.
    pub inter_dist: Option<f64>,
    /// Branch pairs intersected per estimate; fixed by the subset geometry.
    pub branch_pairs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffStudy {
    pub points: Vec<TradeoffPoint>,
    pub egs_wall_time: f64,
    pub egs_evals: usize,
}

enum Subset {
    Triplet(TripletChoice),
    Quad(QuadChoice),
}

/// For every AP triplet the reference assignment with the smallest mean
/// reference-to-secondary distance; for every quadruplet the pairing with
/// the smallest mean intra-pair distance. Subsets above `gamma` are dropped.
fn enumerate(sc: &Scenario, method: TradeoffMethod, gamma: f64) -> Result<Vec<Subset>> {
    let m = sc.num_aps();
    let mut out = Vec::new();
    match method {
        TradeoffMethod::Polo1 => {
            for a in 0..m {
                for b in a + 1..m {
                    for c in b + 1..m {
                        let options = [
                            TripletChoice::new(a, b, c)?,
                            TripletChoice::new(b, a, c)?,
                            TripletChoice::new(c, a, b)?,
                        ];
                        let mut best = options[0];
                        for o in &options[1..] {
                            if o.mean_intra(sc) < best.mean_intra(sc) {
                                best = *o;
                            }
                        }
                        if best.mean_intra(sc) <= gamma {
                            out.push(Subset::Triplet(best));
                        }
                    }
                }
            }
        }
        TradeoffMethod::Polo2 => {
            for a in 0..m {
                for b in a + 1..m {
                    for c in b + 1..m {
                        for d in c + 1..m {
                            let options = [
                                QuadChoice::new((a, b), (c, d), sc)?,
                                QuadChoice::new((a, c), (b, d), sc)?,
                                QuadChoice::new((a, d), (b, c), sc)?,
                            ];
                            let mut best = options[0];
                            for o in &options[1..] {
                                if o.intra_mean < best.intra_mean {
                                    best = *o;
                                }
                            }
                            if best.intra_mean <= gamma {
                                out.push(Subset::Quad(best));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Scores every retained subset of the scenario's APs: PEB coverage on the
/// coverage grid, and mean wall time and ML evaluation count of the
/// estimator over a sparse UE sample, both normalized by one EGS run.
pub fn tradeoff_study(
    sc: &Scenario,
    method: TradeoffMethod,
    settings: &TradeoffSettings,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<TradeoffStudy> {
    let subsets = enumerate(sc, method, settings.gamma)?;
    if subsets.is_empty() {
        return Err(Error::NoValidSubset(format!("no subset has mean intra distance within {} m", settings.gamma)));
    }
    let cov_cells = cell_centers(&sc.area(), settings.coverage_res, sc)?;
    let ues = cell_centers(&sc.area(), settings.ue_res, sc)?;
    let observations = ues
        .iter()
        .enumerate()
        .map(|(i, u)| observe(u, sc, &mut SeededRng::for_task(seed, &[i as u64])))
        .collect::<Result<Vec<_>>>()?;

    let baseline_start = Instant::now();
    let baseline = egs_report(&observations[0], sc, sc.area(), settings.egs_k, cfg)?;
    let egs_wall_time = baseline_start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    let egs_evals = baseline.ml_evals;

    let lam = sc.wavelength();
    let scored = exec::map_indexed(subsets.len(), |i| -> Result<TradeoffPoint> {
        let subset = &subsets[i];
        let mut covered = 0usize;
        for u in &cov_cells {
            let peb = match subset {
                Subset::Triplet(t) => efim_triplet(u, t.indices(), sc)?.peb,
                Subset::Quad(q) => efim_quadruplet_ref(u, q.indices(), sc)?.peb,
            };
            if peb < lam {
                covered += 1;
            }
        }
        let (mut wall, mut evals, mut pairs) = (0.0, 0.0, 0.0);
        for obs in &observations {
            let rep = match subset {
                Subset::Triplet(t) => polo1_estimate(obs, t, sc, cfg)?,
                Subset::Quad(q) => polo2_estimate(obs, q, sc, cfg)?,
            };
            wall += rep.wall_time;
            evals += rep.ml_evals as f64;
            pairs += rep.intersection_calls as f64;
        }
        let n = observations.len() as f64;
        let (indices, mean_intra, inter_dist) = match subset {
            Subset::Triplet(t) => (t.indices().to_vec(), t.mean_intra(sc), None),
            Subset::Quad(q) => (q.indices().to_vec(), q.intra_mean, Some(q.inter_dist)),
        };
        Ok(TradeoffPoint {
            subset: indices,
            coverage: covered as f64 / cov_cells.len() as f64,
            norm_wall_time: wall / n / egs_wall_time,
            norm_evals: evals / n / egs_evals as f64,
            mean_intra,
            inter_dist,
            branch_pairs: pairs / n,
        })
    });
    let points = scored.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(TradeoffStudy { points, egs_wall_time, egs_evals })
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either input is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

/// Writes `subset,coverage,norm_evals,norm_wall_time,mean_intra_m,inter_dist_m,branch_pairs`
/// rows; the subset is `-`-joined AP indices.
pub fn write_tradeoff_csv<W: Write>(points: &[TradeoffPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "subset",
        "coverage",
        "norm_evals",
        "norm_wall_time",
        "mean_intra_m",
        "inter_dist_m",
        "branch_pairs",
    ])?;
    for p in points {
        let subset = p.subset.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-");
        w.write_record([
            subset,
            p.coverage.to_string(),
            p.norm_evals.to_string(),
            p.norm_wall_time.to_string(),
            p.mean_intra.to_string(),
            p.inter_dist.map(|d| d.to_string()).unwrap_or_default(),
            p.branch_pairs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
