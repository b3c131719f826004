//! Spike detection with the two-threshold excursion definition and tests of
//! the limiting Poisson law.
//!
//! While the process sits on the 0 side, an excursion opens at an upward
//! crossing of `epsilon` and closes either at a downward crossing of `delta`
//! (an aborted jump, i.e. a spike) or at an upward crossing of `1 - delta`
//! (a completed jump); the 1 side is treated symmetrically with heights
//! measured as `1 - min(p)`. In the fast-collapse limit the spike maxima form
//! a Poisson point process with intensity
//!
//! ```text
//! d nu_0 = lambda p_eq dt dp / p^2            (0-side excursions)
//! d nu_1 = lambda (1-p_eq) dt dp / (1-p)^2    (1-side excursions)
//! ```
//!
//! per unit of time attached to the respective boundary, plus an atom of
//! weight `lambda p_eq` (resp. `lambda (1-p_eq)`) at full height for the
//! jumps themselves. Crossing detection is sample-based: no sub-step
//! interpolation is attempted, so `dt` must resolve the threshold band
//! (see [`resolution_ok`]).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sde::TrajectoryRecord;
use crate::stats::{binomial_stderr, chi_square_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    FromZero,
    FromOne,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpikeEvent {
    /// Time of the excursion maximum.
    pub t_max: f64,
    /// Maximum of p (0 side) or 1 - min(p) (1 side) during the excursion.
    pub height: f64,
    pub origin: Origin,
    /// True when the excursion crossed to the far side: a jump, not a spike.
    pub completed: bool,
    /// Opening (epsilon upcross) and closing (delta downcross or far-side
    /// crossing) sample times; durations scale as 1/gamma.
    pub t_open: f64,
    pub t_close: f64,
}

/// Per-step noise at the opening threshold must not straddle the whole
/// (delta, epsilon) band, or crossings are skipped between samples.
pub fn resolution_ok(gamma: f64, dt: f64, epsilon: f64, delta: f64) -> bool {
    gamma.sqrt() * epsilon * dt.sqrt() <= delta
}

enum Side {
    Unattached,
    Zero,
    One,
}

#[derive(Clone, Copy)]
struct Excursion {
    max: f64,
    t_max: f64,
    t_open: f64,
}

/// Streaming two-threshold excursion detector for a scalar population signal.
pub struct SpikeDetector {
    epsilon: f64,
    delta: f64,
    side: Side,
    excursion: Option<Excursion>,
    events: Vec<SpikeEvent>,
    /// Time attached to each boundary (denominator of empirical intensities).
    pub attached_time: [f64; 2],
    last_t: Option<f64>,
}

impl SpikeDetector {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(0.0 < delta && delta < epsilon && epsilon < 0.5) {
            return Err(Error::BadThresholds { delta, epsilon });
        }
        Ok(Self {
            epsilon,
            delta,
            side: Side::Unattached,
            excursion: None,
            events: Vec::new(),
            attached_time: [0.0, 0.0],
            last_t: None,
        })
    }

    pub fn push(&mut self, t: f64, p: f64) {
        if let Some(last) = self.last_t {
            match self.side {
                Side::Zero => self.attached_time[0] += t - last,
                Side::One => self.attached_time[1] += t - last,
                Side::Unattached => {}
            }
        }
        self.last_t = Some(t);
        match self.side {
            Side::Unattached => {
                if p <= self.delta {
                    self.side = Side::Zero;
                } else if p >= 1.0 - self.delta {
                    self.side = Side::One;
                }
            }
            Side::Zero => self.step_side(t, p, Origin::FromZero),
            Side::One => self.step_side(t, 1.0 - p, Origin::FromOne),
        }
    }

    // x is the excursion coordinate: p on the 0 side, 1-p on the 1 side.
    fn step_side(&mut self, t: f64, x: f64, origin: Origin) {
        match self.excursion {
            None => {
                if x > self.epsilon {
                    self.excursion = Some(Excursion { max: x, t_max: t, t_open: t });
                }
            }
            Some(exc) => {
                let exc = if x > exc.max { Excursion { max: x, t_max: t, ..exc } } else { exc };
                self.excursion = Some(exc);
                if x >= 1.0 - self.delta {
                    self.events.push(SpikeEvent {
                        t_max: exc.t_max,
                        height: exc.max,
                        origin,
                        completed: true,
                        t_open: exc.t_open,
                        t_close: t,
                    });
                    self.excursion = None;
                    self.side = match origin {
                        Origin::FromZero => Side::One,
                        Origin::FromOne => Side::Zero,
                    };
                } else if x <= self.delta {
                    self.events.push(SpikeEvent {
                        t_max: exc.t_max,
                        height: exc.max,
                        origin,
                        completed: false,
                        t_open: exc.t_open,
                        t_close: t,
                    });
                    self.excursion = None;
                }
            }
        }
    }

    pub fn finish(self) -> (Vec<SpikeEvent>, [f64; 2]) {
        (self.events, self.attached_time)
    }
}

/// Detect excursions in a scalar time series.
pub fn detect_spikes_series(
    times: &[f64],
    populations: &[f64],
    epsilon: f64,
    delta: f64,
) -> Result<Vec<SpikeEvent>> {
    let mut det = SpikeDetector::new(epsilon, delta)?;
    for (&t, &p) in times.iter().zip(populations.iter()) {
        det.push(t, p);
    }
    Ok(det.finish().0)
}

/// Detect excursions in a recorded scalar trajectory (full resolution:
/// `record_stride` must be 1).
pub fn detect_spikes(
    record: &TrajectoryRecord<f64>,
    epsilon: f64,
    delta: f64,
) -> Result<Vec<SpikeEvent>> {
    if record.grid.record_stride != 1 {
        return Err(Error::InvalidParameter {
            name: "record_stride",
            message: "spike detection needs full-resolution recording".into(),
        });
    }
    detect_spikes_series(&record.times, &record.states, epsilon, delta)
}

// ---------------------------------------------------------------------------
// Survival function and Poisson tests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SurvivalPoint {
    pub h: f64,
    /// Events with height >= h per unit time (completed jumps included:
    /// they are the atom at full height).
    pub rate: f64,
    pub count: u64,
    pub stderr: f64,
}

/// Empirical survival S(h) = rate of excursions with height >= h, with
/// Poisson error bars. `total_time` is the normalizing time span.
pub fn spike_survival(
    events: &[SpikeEvent],
    heights: &[f64],
    total_time: f64,
) -> Result<Vec<SurvivalPoint>> {
    if events.len() < 100 {
        return Err(Error::InsufficientEvents {
            found: events.len(),
            needed: 100,
            context: "survival function",
        });
    }
    Ok(heights
        .iter()
        .map(|&h| {
            let count = events.iter().filter(|e| e.height >= h).count() as u64;
            SurvivalPoint {
                h,
                rate: count as f64 / total_time,
                count,
                stderr: (count as f64).sqrt() / total_time,
            }
        })
        .collect())
}

/// Least-squares slope of log S(h) against log h.
pub fn survival_log_slope(points: &[SurvivalPoint]) -> Result<f64> {
    let xs: Vec<f64> = points.iter().map(|p| p.h.ln()).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|p| if p.rate > 0.0 { p.rate.ln() } else { f64::NEG_INFINITY })
        .collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonPositiveFitData);
    }
    let (slope, _, _) = crate::stats::linear_fit(&xs, &ys)?;
    Ok(slope)
}

#[derive(Debug, Clone, Serialize)]
pub struct PoissonCell {
    pub t_window: (f64, f64),
    pub h_bin: (f64, f64),
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoissonCountReport {
    pub cells: Vec<PoissonCell>,
    pub chi_square: f64,
    pub dof: usize,
    pub critical_5pct: f64,
    pub chi_square_pass: bool,
    /// Lag-1 autocovariance of per-window counts, in units of its own
    /// standard error; |z| <= 3 is consistent with independent windows.
    pub independence_z: f64,
    pub independence_pass: bool,
    pub pass: bool,
}

/// Chi-square test of spike counts (one origin, aborted excursions only)
/// against the limit intensity `rate_factor * dt * dh / h^2`, where
/// `rate_factor` is `lambda p_eq` for 0-side spikes (`lambda (1-p_eq)` for
/// the 1 side) and time is measured as attached time per window.
///
/// `windows` are time-window boundaries over the trajectory, `h_edges` the
/// height-bin boundaries. Every cell must expect at least 5 events and the
/// partition must have at least 10 cells.
pub fn poisson_count_test(
    events: &[SpikeEvent],
    origin: Origin,
    rate_factor: f64,
    windows: &[(f64, f64)],
    attached_per_window: &[f64],
    h_edges: &[f64],
) -> Result<PoissonCountReport> {
    if windows.len() * (h_edges.len() - 1) < 10 {
        return Err(Error::InvalidParameter {
            name: "partition",
            message: "need at least 10 cells".into(),
        });
    }
    if windows.len() != attached_per_window.len() {
        return Err(Error::InvalidParameter {
            name: "attached_per_window",
            message: "must match windows".into(),
        });
    }
    let mut cells = Vec::new();
    let mut chi = 0.0;
    for (&win, &occ) in windows.iter().zip(attached_per_window.iter()) {
        for pair in h_edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let expected = rate_factor * occ * (1.0 / lo - 1.0 / hi);
            if expected < 5.0 {
                return Err(Error::InsufficientEvents {
                    found: expected as usize,
                    needed: 5,
                    context: "poisson cell expectation",
                });
            }
            let observed = events
                .iter()
                .filter(|e| {
                    !e.completed
                        && e.origin == origin
                        && e.t_max >= win.0
                        && e.t_max < win.1
                        && e.height >= lo
                        && e.height < hi
                })
                .count() as u64;
            chi += (observed as f64 - expected).powi(2) / expected;
            cells.push(PoissonCell { t_window: win, h_bin: (lo, hi), observed, expected });
        }
    }
    let dof = cells.len();
    let critical = chi_square_quantile(dof, 0.95);

    // Independence across windows: lag-1 autocovariance of window counts.
    let counts: Vec<f64> = windows
        .iter()
        .map(|&win| {
            events
                .iter()
                .filter(|e| {
                    !e.completed && e.origin == origin && e.t_max >= win.0 && e.t_max < win.1
                })
                .count() as f64
        })
        .collect();
    let mw = crate::stats::mean(&counts);
    let nw = counts.len();
    let mut cov = 0.0;
    for i in 0..nw - 1 {
        cov += (counts[i] - mw) * (counts[i + 1] - mw);
    }
    cov /= (nw - 1) as f64;
    // for independent Poisson windows the lag-1 sample autocovariance has
    // standard error ~ var / sqrt(n_windows - 1)
    let var = counts.iter().map(|c| (c - mw) * (c - mw)).sum::<f64>() / nw as f64;
    let se = var / ((nw - 1) as f64).sqrt();
    let independence_z = if se > 0.0 { cov / se } else { 0.0 };

    let chi_square_pass = chi <= critical;
    let independence_pass = independence_z.abs() <= 3.0;
    Ok(PoissonCountReport {
        cells,
        chi_square: chi,
        dof,
        critical_5pct: critical,
        chi_square_pass,
        independence_z,
        independence_pass,
        pass: chi_square_pass && independence_pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompletionEstimate {
    pub origin: Origin,
    pub n_excursions: usize,
    pub n_completed: usize,
    pub fraction: f64,
    pub stderr: f64,
}

/// Fraction of excursions (per origin) that complete into jumps; the
/// martingale argument predicts this to be the opening threshold epsilon.
pub fn jump_completion_probability(events: &[SpikeEvent], origin: Origin) -> Result<CompletionEstimate> {
    let n_excursions = events.iter().filter(|e| e.origin == origin).count();
    if n_excursions == 0 {
        return Err(Error::InsufficientEvents { found: 0, needed: 1, context: "completion" });
    }
    let n_completed = events.iter().filter(|e| e.origin == origin && e.completed).count();
    let fraction = n_completed as f64 / n_excursions as f64;
    Ok(CompletionEstimate {
        origin,
        n_excursions,
        n_completed,
        fraction,
        stderr: binomial_stderr(fraction, n_excursions),
    })
}

/// CSV export: (trajectory, t_max, height, origin, completed).
pub fn write_spike_csv<W: std::io::Write>(
    events_per_trajectory: &[(u64, &[SpikeEvent])],
    w: &mut W,
) -> Result<()> {
    writeln!(w, "trajectory,t_max,height,origin,completed")?;
    for (traj, events) in events_per_trajectory {
        for e in *events {
            let origin = match e.origin {
                Origin::FromZero => "from_zero",
                Origin::FromOne => "from_one",
            };
            writeln!(w, "{},{},{},{},{}", traj, e.t_max, e.height, origin, e.completed)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_thresholds() {
        assert!(SpikeDetector::new(0.01, 0.02).is_err());
        assert!(SpikeDetector::new(0.6, 0.01).is_err());
        assert!(SpikeDetector::new(0.02, 0.01).is_ok());
    }

    #[test]
    fn constant_trajectory_no_events() {
        let times: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ps = vec![0.0; 100];
        let events = detect_spikes_series(&times, &ps, 0.02, 0.01).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn synthetic_tent_excursion() {
        // 0 -> 0.4 -> 0: one aborted spike of height 0.4
        let mut times = Vec::new();
        let mut ps = Vec::new();
        let n = 100;
        for i in 0..=n {
            times.push(i as f64 * 0.01);
            let x = i as f64 / n as f64;
            ps.push(if x < 0.5 { 0.8 * x } else { 0.8 * (1.0 - x) });
        }
        let events = detect_spikes_series(&times, &ps, 0.02, 0.01).unwrap();
        assert_eq!(events.len(), 1);
        let e = events[0];
        assert!((e.height - 0.4).abs() < 1e-2);
        assert_eq!(e.origin, Origin::FromZero);
        assert!(!e.completed);
        assert!((e.t_max - 0.5).abs() < 0.011);
    }

    #[test]
    fn completed_excursion_switches_side() {
        // 0 -> 1 ramp, then 1 -> 0 ramp: one completed jump each way
        let mut times = Vec::new();
        let mut ps = Vec::new();
        let n = 200;
        for i in 0..=n {
            times.push(i as f64 * 0.01);
            let x = i as f64 / n as f64;
            ps.push(if x < 0.5 { 2.0 * x } else { 2.0 * (1.0 - x) });
        }
        let events = detect_spikes_series(&times, &ps, 0.02, 0.01).unwrap();
        assert_eq!(events.len(), 2);
        assert!(events[0].completed);
        assert_eq!(events[0].origin, Origin::FromZero);
        assert!(events[1].completed);
        assert_eq!(events[1].origin, Origin::FromOne);
    }

    #[test]
    fn survival_from_synthetic_intensity() {
        // draw heights from the exact law P(H >= h) = eps/h by quantiles, plus
        // the completion atom; survival must match lam_peq / h.
        let lam_peq = 0.5;
        let t_total = 4000.0;
        let eps = 0.02;
        let n_exc = (lam_peq * t_total / eps) as usize; // openings
        let mut events = Vec::new();
        for i in 0..n_exc {
            let u = (i as f64 + 0.5) / n_exc as f64; // uniform
            let h = eps / u; // inverse of P(H >= h) = eps/h
            let completed = h >= 1.0;
            let t = u * t_total;
            events.push(SpikeEvent {
                t_max: t,
                height: h.min(1.0),
                origin: Origin::FromZero,
                completed,
                t_open: t,
                t_close: t,
            });
        }
        let heights = [0.05, 0.1, 0.2, 0.4];
        let surv = spike_survival(&events, &heights, t_total).unwrap();
        for pt in &surv {
            let expected = lam_peq / pt.h;
            assert!(
                (pt.rate - expected).abs() < 0.01 * expected + 3.0 * pt.stderr,
                "S({}) = {} vs {}",
                pt.h,
                pt.rate,
                expected
            );
        }
        let slope = survival_log_slope(&surv).unwrap();
        assert!((slope + 1.0).abs() < 0.02, "slope {slope}");

        // completion atom: fraction eps of openings complete
        let comp = jump_completion_probability(&events, Origin::FromZero).unwrap();
        assert!((comp.fraction - eps).abs() < 3.0 * comp.stderr + 1e-3);
    }

    #[test]
    fn poisson_test_on_exact_draws() {
        // deterministic stratified draws from the exact intensity pass chi^2
        let lam_peq = 0.5;
        let t_total = 5000.0;
        let eps = 0.01;
        let n_exc = (lam_peq * t_total / eps) as usize;
        let mut events = Vec::new();
        // low-discrepancy fill of (t, u) space
        let mut acc = 0.0f64;
        for i in 0..n_exc {
            let u = (i as f64 + 0.5) / n_exc as f64;
            acc += 0.618_033_988_749_894_9;
            let t = (acc - acc.floor()) * t_total;
            let h = eps / u;
            events.push(SpikeEvent {
                t_max: t,
                height: h.min(1.0),
                origin: Origin::FromZero,
                completed: h >= 1.0,
                t_open: t,
                t_close: t,
            });
        }
        let windows: Vec<(f64, f64)> = (0..5)
            .map(|w| (w as f64 * t_total / 5.0, (w as f64 + 1.0) * t_total / 5.0))
            .collect();
        let attached = vec![t_total / 5.0; 5];
        let h_edges = [0.05, 0.1, 0.25, 0.9999];
        let report =
            poisson_count_test(&events, Origin::FromZero, lam_peq, &windows, &attached, &h_edges)
                .unwrap();
        assert!(report.chi_square_pass, "{report:?}");
    }

    #[test]
    fn resolution_check() {
        // criterion-style parameters resolve; a 10x larger step does not
        assert!(resolution_ok(400.0, 5e-4, 0.02, 0.01));
        assert!(!resolution_ok(400.0, 5e-3, 0.02, 0.01));
    }
}
