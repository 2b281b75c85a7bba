//! Heuristic split of a trajectory into a geometric head and a sublinear
//! tail, plus pointwise checks of the tail recursion and its envelope.

use serde::Serialize;

use super::{EtaName, EtaSpec, Trajectory};
use crate::stats::{linear_fit, LineFit};
use crate::subspace::IterateMetrics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    SsErr,
    StNorm,
    TtNorm,
    TtErr,
    D,
    A,
    ErrSpec,
    ErrFro,
    GradNorm,
}

impl Column {
    pub fn get(self, m: &IterateMetrics) -> f64 {
        match self {
            Column::SsErr => m.ss_err,
            Column::StNorm => m.st_norm,
            Column::TtNorm => m.tt_norm,
            Column::TtErr => m.tt_err,
            Column::D => m.d_max,
            Column::A => m.a,
            Column::ErrSpec => m.err_spec,
            Column::ErrFro => m.err_fro,
            Column::GradNorm => m.grad_norm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseParams {
    pub eta: f64,
    /// Quantity whose logarithm is fitted in the head.
    pub head: Column,
    /// Quantity fitted by `c/t` and checked against the recursion. `A`
    /// coincides with `D` on noiseless runs.
    pub tail: Column,
    pub min_window: usize,
    pub grid: usize,
    pub tail_fraction: f64,
    pub burn_in: f64,
}

impl PhaseParams {
    pub fn new(eta: f64) -> Self {
        PhaseParams {
            eta,
            head: Column::SsErr,
            tail: Column::A,
            min_window: 10,
            grid: 50,
            tail_fraction: 0.5,
            burn_in: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailFit {
    pub c: f64,
    /// `‖y − c/t‖ / ‖y‖` over the fitted rows.
    pub rel_residual: f64,
    pub from_t: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseReport {
    pub applicable: bool,
    pub notes: Vec<String>,
    /// First strictly decreasing run of the head quantity, as `(t0, t1)`.
    pub window: Option<(usize, usize)>,
    /// Fit of `ln(head)` against `t` over the whole window.
    pub window_fit: Option<LineFit>,
    /// Boundary maximizing the piecewise R² of a linear-in-`t` head and a
    /// power-law tail.
    pub split: Option<usize>,
    pub head_fit: Option<LineFit>,
    pub tail_power_fit: Option<LineFit>,
    pub piecewise_r2: Option<f64>,
    pub tail: Option<TailFit>,
    pub recursion_checked: usize,
    pub recursion_rate: Option<f64>,
    pub envelope_checked: usize,
    pub envelope_rate: Option<f64>,
    pub envelope_pass: Option<bool>,
}

/// First run of strictly decreasing positive values spanning at least
/// `min_len` points, with the fit of `ln v` against `t` over it.
pub fn fit_decay_window(t: &[f64], v: &[f64], min_len: usize) -> Option<(usize, usize, LineFit)> {
    let n = v.len().min(t.len());
    let mut start = 0;
    while start < n {
        if !(v[start] > 0.0 && v[start].is_finite()) {
            start += 1;
            continue;
        }
        let mut end = start;
        while end + 1 < n && v[end + 1] > 0.0 && v[end + 1] < v[end] {
            end += 1;
        }
        if end + 1 - start >= min_len.max(2) {
            let ln: Vec<f64> = v[start..=end].iter().map(|x| x.ln()).collect();
            return linear_fit(&t[start..=end], &ln).map(|f| (start, end, f));
        }
        start = end + 1;
    }
    None
}

fn sse(x: &[f64], y: &[f64], f: &LineFit) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (f.slope * a + f.intercept);
            e * e
        })
        .sum()
}

struct Split {
    at: usize,
    head: LineFit,
    tail: LineFit,
    r2: f64,
}

fn best_split(t: &[f64], ln: &[f64], min_seg: usize, grid: usize) -> Option<Split> {
    let n = ln.len();
    if n < 2 * min_seg + 1 || grid == 0 {
        return None;
    }
    let mean = ln.iter().sum::<f64>() / n as f64;
    let sst: f64 = ln.iter().map(|y| (y - mean) * (y - mean)).sum();
    if sst == 0.0 {
        return None;
    }
    let lo = min_seg;
    let hi = n - 1 - min_seg;
    let steps = grid.min(hi - lo + 1);
    let mut best: Option<Split> = None;
    for g in 0..steps {
        let at = lo + if steps == 1 { 0 } else { g * (hi - lo) / (steps - 1) };
        let head = match linear_fit(&t[..=at], &ln[..=at]) {
            Some(f) => f,
            None => continue,
        };
        let lt: Vec<f64> = t[at..].iter().map(|x| x.ln()).collect();
        let tail = match linear_fit(&lt, &ln[at..]) {
            Some(f) => f,
            None => continue,
        };
        let r2 = 1.0 - (sse(&t[..=at], &ln[..=at], &head) + sse(&lt, &ln[at..], &tail)) / sst;
        if best.as_ref().is_none_or(|b| r2 > b.r2) {
            best = Some(Split { at, head, tail, r2 });
        }
    }
    best
}

fn fit_inverse_t(rows: &[(f64, f64)]) -> Option<(f64, f64)> {
    let num: f64 = rows.iter().map(|(t, y)| y / t).sum();
    let den: f64 = rows.iter().map(|(t, _)| 1.0 / (t * t)).sum();
    let norm = rows.iter().map(|(_, y)| y * y).sum::<f64>().sqrt();
    if den == 0.0 || norm == 0.0 {
        return None;
    }
    let c = num / den;
    let res = rows.iter().map(|(t, y)| (y - c / t).powi(2)).sum::<f64>().sqrt();
    Some((c, res / norm))
}

pub fn detect_phases_on(metrics: &[IterateMetrics], p: &PhaseParams) -> PhaseReport {
    let mut r = PhaseReport {
        applicable: false,
        notes: Vec::new(),
        window: None,
        window_fit: None,
        split: None,
        head_fit: None,
        tail_power_fit: None,
        piecewise_r2: None,
        tail: None,
        recursion_checked: 0,
        recursion_rate: None,
        envelope_checked: 0,
        envelope_rate: None,
        envelope_pass: None,
    };
    if metrics.len() < 3 {
        r.notes.push("trajectory too short".into());
        return r;
    }
    let t: Vec<f64> = metrics.iter().map(|m| m.t as f64).collect();
    let head: Vec<f64> = metrics.iter().map(|m| p.head.get(m)).collect();
    let tail: Vec<f64> = metrics.iter().map(|m| p.tail.get(m)).collect();

    match fit_decay_window(&t, &head, p.min_window) {
        Some((s, e, fit)) => {
            r.window = Some((metrics[s].t, metrics[e].t));
            r.window_fit = Some(fit);
            let ln: Vec<f64> = head[s..=e].iter().map(|x| x.ln()).collect();
            let tw = &t[s..=e];
            // ln t is undefined at t = 0, so the tail segment starts at t >= 1.
            let offset = usize::from(tw[0] <= 0.0);
            let min_seg = (p.min_window / 2).max(2);
            match best_split(&tw[offset..], &ln[offset..], min_seg, p.grid) {
                Some(sp) => {
                    r.split = Some(metrics[s + offset + sp.at].t);
                    r.head_fit = Some(sp.head);
                    r.tail_power_fit = Some(sp.tail);
                    r.piecewise_r2 = Some(sp.r2);
                }
                None => r.notes.push("decay window too short to split".into()),
            }
        }
        None => r.notes.push("no decreasing window in the head quantity".into()),
    }

    let last_t = metrics.last().map_or(0, |m| m.t);
    let from_t = ((1.0 - p.tail_fraction) * last_t as f64).ceil().max(1.0) as usize;
    let rows: Vec<(f64, f64)> = metrics
        .iter()
        .filter(|m| m.t >= from_t)
        .map(|m| (m.t as f64, p.tail.get(m)))
        .collect();
    match fit_inverse_t(&rows) {
        Some((c, rel_residual)) => r.tail = Some(TailFit { c, rel_residual, from_t }),
        None => r.notes.push("tail quantity vanishes on the fitted rows".into()),
    }

    let mut checked = 0;
    let mut passed = 0;
    for w in metrics.windows(2) {
        let (a0, a1) = (p.tail.get(&w[0]), p.tail.get(&w[1]));
        if w[1].t != w[0].t + 1 || a0.is_nan() || a0 <= 0.0 {
            continue;
        }
        checked += 1;
        let bound = (1.0 - 0.5 * p.eta * a0) * a0;
        if a1 <= bound + 1e-12 * a0 {
            passed += 1;
        }
    }
    r.recursion_checked = checked;
    if checked > 0 {
        r.recursion_rate = Some(passed as f64 / checked as f64);
    } else {
        r.notes.push("tail quantity never positive; recursion not applicable".into());
    }

    let a0 = tail[0];
    if a0 > 0.0 && metrics[0].t == 0 {
        let burn = (p.burn_in * last_t as f64).ceil() as usize;
        let (mut checked, mut passed) = (0usize, 0usize);
        for m in metrics.iter().filter(|m| m.t >= burn) {
            checked += 1;
            let env = 4.0 / (p.eta * m.t as f64 + 4.0 / a0);
            if p.tail.get(m) <= env * (1.0 + 1e-12) {
                passed += 1;
            }
        }
        r.envelope_checked = checked;
        if checked > 0 {
            r.envelope_rate = Some(passed as f64 / checked as f64);
            r.envelope_pass = Some(passed == checked);
        }
    } else {
        r.notes.push("tail quantity zero at t = 0; envelope not applicable".into());
    }

    r.applicable = r.window.is_some() || r.tail.is_some() || r.recursion_rate.is_some();
    r
}

/// Phase report with the step size taken from the trajectory's config.
pub fn detect_phases(traj: &Trajectory) -> PhaseReport {
    let c = &traj.config;
    let eta = match c.eta {
        EtaSpec::Value(v) => v,
        EtaSpec::Named(EtaName::Theory) => {
            let dt = c.dt.resolve(c.d.saturating_sub(c.r));
            let sigma1 = c.ds.iter().chain(&dt).fold(0.0f64, |m, x| m.max(x.abs()));
            1.0 / (100.0 * sigma1)
        }
    };
    detect_phases_on(&traj.metrics, &PhaseParams::new(eta))
}
