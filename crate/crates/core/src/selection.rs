//! AP-subset selection: minimum distance product, collinear triplets scored
//! by PEB coverage, and disjoint pairs with maximal inter-pair distance.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exec;
use crate::fim::efim_triplet;
use crate::scenario::{Area, Pos, Scenario};

/// Grid points closer than this to an AP are nudged away, meters.
pub const AP_CLEARANCE: f64 = 1e-3;

/// Selected reference and secondary APs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletChoice {
    pub reference: usize,
    pub secondaries: [usize; 2],
    /// Fraction of the area with triplet PEB below the threshold, when scored.
    pub coverage: Option<f64>,
}

impl TripletChoice {
    pub fn new(reference: usize, s1: usize, s2: usize) -> Result<Self> {
        if reference == s1 || reference == s2 || s1 == s2 {
            return Err(Error::domain("triplet APs must be distinct"));
        }
        Ok(Self { reference, secondaries: [s1, s2], coverage: None })
    }

    pub fn indices(&self) -> [usize; 3] {
        [self.reference, self.secondaries[0], self.secondaries[1]]
    }

    /// `|p_r - p_s1| * |p_r - p_s2|`.
    pub fn distance_product(&self, sc: &Scenario) -> f64 {
        let r = sc.ap(self.reference);
        (r - sc.ap(self.secondaries[0])).norm() * (r - sc.ap(self.secondaries[1])).norm()
    }

    pub fn max_distance(&self, sc: &Scenario) -> f64 {
        let [a, b, c] = self.indices().map(|m| sc.ap(m));
        (a - b).norm().max((a - c).norm()).max((b - c).norm())
    }

    /// Mean of the two reference-to-secondary distances.
    pub fn mean_intra(&self, sc: &Scenario) -> f64 {
        let r = sc.ap(self.reference);
        0.5 * ((r - sc.ap(self.secondaries[0])).norm() + (r - sc.ap(self.secondaries[1])).norm())
    }
}

/// Two disjoint AP pairs, normalized so that each pair is ascending and
/// `pair1 < pair2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadChoice {
    pub pair1: (usize, usize),
    pub pair2: (usize, usize),
    /// Mean of the two intra-pair distances, meters.
    pub intra_mean: f64,
    /// Distance between the pair midpoints, meters.
    pub inter_dist: f64,
}

impl QuadChoice {
    pub fn new(pair1: (usize, usize), pair2: (usize, usize), sc: &Scenario) -> Result<Self> {
        let idx = [pair1.0, pair1.1, pair2.0, pair2.1];
        for i in 0..4 {
            if idx[i] >= sc.num_aps() {
                return Err(Error::domain(format!("AP index {} out of range", idx[i])));
            }
            if idx[..i].contains(&idx[i]) {
                return Err(Error::domain("quadruplet APs must be distinct"));
            }
        }
        let norm = |(a, b): (usize, usize)| if a < b { (a, b) } else { (b, a) };
        let (p1, p2) = (norm(pair1), norm(pair2));
        let (pair1, pair2) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let d = |(a, b): (usize, usize)| (sc.ap(a) - sc.ap(b)).norm();
        let mid = |(a, b): (usize, usize)| 0.5 * (sc.ap(a) + sc.ap(b));
        Ok(Self {
            pair1,
            pair2,
            intra_mean: 0.5 * (d(pair1) + d(pair2)),
            inter_dist: (mid(pair1) - mid(pair2)).norm(),
        })
    }

    pub fn indices(&self) -> [usize; 4] {
        [self.pair1.0, self.pair1.1, self.pair2.0, self.pair2.1]
    }

    pub fn pairs(&self) -> [(usize, usize); 2] {
        [self.pair1, self.pair2]
    }
}

/// A triplet assignment with the quantities the selectors rank by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredTriplet {
    pub choice: TripletChoice,
    pub distance_product: f64,
    pub max_distance: f64,
}

/// Cell centers of `area` at `res`, with points on top of an AP moved by
/// [`AP_CLEARANCE`] along +x.
pub fn cell_centers(area: &Area, res: f64, sc: &Scenario) -> Result<Vec<Pos>> {
    let mut cells = area.grid_sites(res)?;
    for c in cells.iter_mut() {
        if sc.ap_positions().iter().any(|p| (p - *c).norm() < AP_CLEARANCE) {
            c.x += AP_CLEARANCE;
        }
    }
    Ok(cells)
}

/// Every assignment `(r, s1 < s2)`, in lexicographic order.
pub fn all_assignments(m: usize) -> Vec<TripletChoice> {
    let mut out = Vec::new();
    for r in 0..m {
        for s1 in 0..m {
            for s2 in s1 + 1..m {
                if s1 != r && s2 != r {
                    out.push(TripletChoice { reference: r, secondaries: [s1, s2], coverage: None });
                }
            }
        }
    }
    out
}

/// Distance-product score of every assignment.
pub fn score_strategy1(sc: &Scenario) -> Vec<ScoredTriplet> {
    all_assignments(sc.num_aps())
        .into_iter()
        .map(|choice| ScoredTriplet {
            distance_product: choice.distance_product(sc),
            max_distance: choice.max_distance(sc),
            choice,
        })
        .collect()
}

/// The assignment with the smallest `|p_r - p_s1| |p_r - p_s2|`; ties go to
/// the lexicographically smallest `(r, s1, s2)`.
pub fn select_strategy1(sc: &Scenario) -> Result<TripletChoice> {
    if sc.num_aps() < 3 {
        return Err(Error::domain("strategy 1 needs at least 3 APs"));
    }
    let scores = score_strategy1(sc);
    let keys: Vec<f64> = scores.iter().map(|s| s.distance_product).collect();
    let best = exec::argmin_by_key(&keys).ok_or(Error::EmptyCandidates)?;
    Ok(scores[best].choice)
}

/// Angle at the reference between the two secondaries, degrees.
pub fn reference_angle_deg(choice: &TripletChoice, sc: &Scenario) -> f64 {
    let r = sc.ap(choice.reference);
    let a = sc.ap(choice.secondaries[0]) - r;
    let b = sc.ap(choice.secondaries[1]) - r;
    (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Fraction of `cells` where the triplet PEB is below `threshold`.
pub fn triplet_coverage(choice: &TripletChoice, cells: &[Pos], threshold: f64, sc: &Scenario) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::domain("coverage needs at least one cell"));
    }
    let idx = choice.indices();
    let pebs = exec::map_indexed(cells.len(), |i| efim_triplet(&cells[i], idx, sc).map(|r| r.peb));
    let mut hits = 0usize;
    for p in pebs {
        if p? < threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / cells.len() as f64)
}

/// Parameters of the collinear-triplet selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strategy2Params {
    /// Collinearity tolerance, degrees.
    pub epsilon_deg: f64,
    /// Upper bound on the largest pairwise AP distance, meters.
    pub gamma: f64,
    /// PEB threshold defining coverage, meters.
    pub coverage_threshold: f64,
    /// UE grid spacing for the coverage map, meters.
    pub grid_res: f64,
}

/// Assignments passing the collinearity and distance filters, each with its
/// coverage over the scenario area.
pub fn score_strategy2(sc: &Scenario, params: &Strategy2Params) -> Result<Vec<ScoredTriplet>> {
    let cells = cell_centers(&sc.area(), params.grid_res, sc)?;
    let mut out = Vec::new();
    for choice in all_assignments(sc.num_aps()) {
        if (reference_angle_deg(&choice, sc) - 180.0).abs() > params.epsilon_deg {
            continue;
        }
        let max_distance = choice.max_distance(sc);
        if !(max_distance < params.gamma) {
            continue;
        }
        let coverage = triplet_coverage(&choice, &cells, params.coverage_threshold, sc)?;
        out.push(ScoredTriplet {
            choice: TripletChoice { coverage: Some(coverage), ..choice },
            distance_product: choice.distance_product(sc),
            max_distance,
        });
    }
    Ok(out)
}

/// Among nearly collinear, distance-bounded assignments, the one with the
/// largest PEB coverage; ties go to the smaller distance product, then to
/// the lexicographically smallest assignment.
pub fn select_strategy2(sc: &Scenario, params: &Strategy2Params) -> Result<TripletChoice> {
    let scores = score_strategy2(sc, params)?;
    let mut best: Option<&ScoredTriplet> = None;
    for s in &scores {
        let better = match best {
            None => true,
            Some(b) => {
                let (cs, cb) = (s.choice.coverage.unwrap_or(0.0), b.choice.coverage.unwrap_or(0.0));
                cs > cb || (cs == cb && s.distance_product < b.distance_product)
            }
        };
        if better {
            best = Some(s);
        }
    }
    best.map(|s| s.choice).ok_or_else(|| {
        Error::NoValidSubset(format!(
            "no triplet is within {} deg of collinear with all distances below {} m; increase epsilon or gamma",
            params.epsilon_deg, params.gamma
        ))
    })
}

/// For every 4-subset, its lowest-intra-mean pairing, filtered by
/// `intra_mean < gamma`. Subsets come in lexicographic order.
pub fn score_polo2(sc: &Scenario, gamma: f64) -> Result<Vec<QuadChoice>> {
    let m = sc.num_aps();
    let mut out = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                for d in c + 1..m {
                    let pairings = [((a, b), (c, d)), ((a, c), (b, d)), ((a, d), (b, c))];
                    let mut best: Option<QuadChoice> = None;
                    for (p1, p2) in pairings {
                        let q = QuadChoice::new(p1, p2, sc)?;
                        if best.is_none_or(|bq| q.intra_mean < bq.intra_mean) {
                            best = Some(q);
                        }
                    }
                    let q = best.expect("three pairings");
                    if q.intra_mean < gamma {
                        out.push(q);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The valid quadruplet with the largest inter-pair distance; ties go to
/// the lexicographically smallest subset.
pub fn select_polo2(sc: &Scenario, gamma: f64) -> Result<QuadChoice> {
    if sc.num_aps() < 4 {
        return Err(Error::domain("POLO-II selection needs at least 4 APs"));
    }
    let scores = score_polo2(sc, gamma)?;
    let mut best: Option<QuadChoice> = None;
    for q in scores {
        if best.is_none_or(|b| q.inter_dist > b.inter_dist) {
            best = Some(q);
        }
    }
    best.ok_or_else(|| Error::NoValidSubset(format!("no quadruplet has mean intra-pair distance below {gamma} m")))
}

/// Writes `reference,s1,s2,distance_product_m2,max_distance_m,coverage` rows.
pub fn write_triplet_scores<W: Write>(scores: &[ScoredTriplet], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["reference", "s1", "s2", "distance_product_m2", "max_distance_m", "coverage"])?;
    for s in scores {
        w.write_record([
            s.choice.reference.to_string(),
            s.choice.secondaries[0].to_string(),
            s.choice.secondaries[1].to_string(),
            s.distance_product.to_string(),
            s.max_distance.to_string(),
            s.choice.coverage.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `a1,b1,a2,b2,intra_mean_m,inter_dist_m` rows.
pub fn write_quad_scores<W: Write>(scores: &[QuadChoice], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["a1", "b1", "a2", "b2", "intra_mean_m", "inter_dist_m"])?;
    for q in scores {
        w.write_record([
            q.pair1.0.to_string(),
            q.pair1.1.to_string(),
            q.pair2.0.to_string(),
            q.pair2.1.to_string(),
            q.intra_mean.to_string(),
            q.inter_dist.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
