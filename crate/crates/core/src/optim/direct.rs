use serde::{Deserialize, Serialize};

use crate::models::SearchBox;
use crate::{Error, Result};

/// Stand-in for infinite objective values inside the hull computations.
const HUGE: f64 = 1e300;
/// Smallest side length is `3^-MAX_LEVEL` of the box width.
const MAX_LEVEL: u32 = 30;
/// Limits and balance parameter for one DIRECT search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectBudget {
    pub max_evaluations: usize,
    /// Number of rectangle divisions allowed.
    #[serde(default = "unlimited")]
    pub max_rectangle_splits: usize,
    /// Required improvement over the incumbent, relative to `|f_min|`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn unlimited() -> usize {
    usize::MAX
}

fn default_epsilon() -> f64 {
    1e-4
}

impl Default for DirectBudget {
    fn default() -> Self {
        Self::evaluations(2000)
    }
}

impl DirectBudget {
    pub fn evaluations(max_evaluations: usize) -> Self {
        Self {
            max_evaluations,
            max_rectangle_splits: unlimited(),
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
struct Rect {
    centre: Vec<f64>,
    levels: Vec<u32>,
    f: f64,
    diameter: f64,
}

fn diameter(levels: &[u32]) -> f64 {
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    0.5 * sorted
        .iter()
        .map(|&l| 3f64.powi(-(l as i32) * 2))
        .sum::<f64>()
        .sqrt()
}

fn rect(centre: Vec<f64>, levels: Vec<u32>, f: f64) -> Rect {
    let diameter = diameter(&levels);
    Rect {
        centre,
        levels,
        f,
        diameter,
    }
}

fn finite(f: f64) -> f64 {
    f.clamp(-HUGE, HUGE)
}

/// Indices of potentially optimal rectangles: the lower-right convex hull of
/// the (diameter, value) cloud, filtered by the sufficient-decrease test.
fn potentially_optimal(rects: &[Rect], epsilon: f64) -> Vec<usize> {
    // Best rectangle of each size, ordered by size.
    let mut order: Vec<usize> = (0..rects.len()).collect();
    order.sort_by(|&a, &b| {
        rects[a]
            .diameter
            .total_cmp(&rects[b].diameter)
            .then(finite(rects[a].f).total_cmp(&finite(rects[b].f)))
            .then(a.cmp(&b))
    });
    let mut groups: Vec<usize> = Vec::new();
    for i in order {
        match groups.last() {
            Some(&g) if rects[g].diameter == rects[i].diameter => {}
            _ => groups.push(i),
        }
    }
    let fmin = rects.iter().map(|r| finite(r.f)).fold(f64::INFINITY, f64::min);
    let threshold = fmin - epsilon * fmin.abs();

    let mut out = Vec::new();
    for (gj, &j) in groups.iter().enumerate() {
        let (dj, fj) = (rects[j].diameter, finite(rects[j].f));
        if rects[j].levels.iter().all(|&l| l >= MAX_LEVEL) {
            continue;
        }
        let mut k_low = f64::NEG_INFINITY;
        let mut k_up = f64::INFINITY;
        for (gi, &i) in groups.iter().enumerate() {
            let (di, fi) = (rects[i].diameter, finite(rects[i].f));
            if gi < gj {
                k_low = k_low.max((fj - fi) / (dj - di));
            } else if gi > gj {
                k_up = k_up.min((fi - fj) / (di - dj));
            }
        }
        if k_up <= 0.0 || k_low > k_up {
            continue;
        }
        if k_up.is_finite() && fj - k_up * dj > threshold {
            continue;
        }
        out.push(j);
    }
    out
}

/// Minimises `f` over `bbox` with the DIRECT algorithm within `budget`.
/// Deterministic; a NaN objective value is a contract violation.
pub fn direct_minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    bbox: &SearchBox,
    budget: &DirectBudget,
) -> Result<DirectResult> {
    let d = bbox.dim();
    if budget.max_evaluations == 0 {
        return Err(Error::Contract("DIRECT needs a positive evaluation budget".into()));
    }
    if !(budget.epsilon >= 0.0) {
        return Err(Error::Contract(format!("DIRECT epsilon {} must be >= 0", budget.epsilon)));
    }
    let max_evals = budget.max_evaluations;
    let mut splits = 0usize;
    let mut evals = 0usize;
    let mut eval = |u: &[f64], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let x = bbox.from_unit(u);
        let v = f(&x);
        if v.is_nan() {
            return Err(Error::Contract(format!("objective returned NaN at {x:?}")));
        }
        Ok(v)
    };

    let centre = vec![0.5; d];
    let f0 = eval(&centre, &mut evals)?;
    let mut rects = vec![rect(centre, vec![0; d], f0)];
    let mut best = 0usize;

    'outer: loop {
        let chosen = potentially_optimal(&rects, budget.epsilon);
        if chosen.is_empty() {
            break;
        }
        for j in chosen {
            let min_level = *rects[j].levels.iter().min().unwrap();
            if min_level >= MAX_LEVEL {
                continue;
            }
            let dims: Vec<usize> = (0..d).filter(|&i| rects[j].levels[i] == min_level).collect();
            if evals + 2 * dims.len() > max_evals || splits >= budget.max_rectangle_splits {
                break 'outer;
            }
            splits += 1;
            let delta = 3f64.powi(-(min_level as i32 + 1));
            let mut probes = Vec::with_capacity(dims.len());
            for &i in &dims {
                let mut plus = rects[j].centre.clone();
                plus[i] += delta;
                let mut minus = rects[j].centre.clone();
                minus[i] -= delta;
                let fp = eval(&plus, &mut evals)?;
                let fm = eval(&minus, &mut evals)?;
                probes.push((i, plus, fp, minus, fm));
            }
            probes.sort_by(|a, b| finite(a.2.min(a.4)).total_cmp(&finite(b.2.min(b.4))).then(a.0.cmp(&b.0)));
            let mut levels = rects[j].levels.clone();
            for (i, plus, fp, minus, fm) in probes {
                levels[i] += 1;
                rects.push(rect(plus, levels.clone(), fp));
                rects.push(rect(minus, levels.clone(), fm));
            }
            rects[j] = rect(rects[j].centre.clone(), levels, rects[j].f);
        }
        for (i, r) in rects.iter().enumerate() {
            if r.f < rects[best].f {
                best = i;
            }
        }
        if evals >= max_evals {
            break;
        }
    }
    for (i, r) in rects.iter().enumerate() {
        if r.f < rects[best].f {
            best = i;
        }
    }
    Ok(DirectResult {
        x: bbox.from_unit(&rects[best].centre),
        f: rects[best].f,
        evaluations: evals,
    })
}

/// Maximising counterpart of [`direct_minimize`].
pub fn direct_maximize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    bbox: &SearchBox,
    budget: &DirectBudget,
) -> Result<DirectResult> {
    let mut r = direct_minimize(|x| -f(x), bbox, budget)?;
    r.f = -r.f;
    Ok(r)
}
