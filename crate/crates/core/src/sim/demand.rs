use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::{IntersectionGeometry, Od, LANE_COUNT, OD_COUNT};
use super::SimError;
use crate::rng::Stream;

/// Length of one demand-table interval.
pub const INTERVAL_SECONDS: f64 = 1800.0;

/// Per-30-minute OD counts: mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandTable {
    /// `mean[from-1][to-1]`, vehicles per 30 min; diagonal ignored.
    pub mean: [[f64; 4]; 4],
    pub std: [[f64; 4]; 4],
}

impl DemandTable {
    /// Morning-peak counts of the reference intersection.
    pub fn reference() -> Self {
        DemandTable {
            mean: [
                [0.0, 109.7, 14.8, 12.8],
                [167.4, 0.0, 88.7, 219.2],
                [89.3, 66.3, 0.0, 152.6],
                [32.2, 64.2, 154.2, 0.0],
            ],
            std: [[0.0, 47.0, 6.1, 6.2], [68.5, 0.0, 35.3, 84.9], [36.1, 27.7, 0.0, 62.5], [15.5, 27.1, 71.0, 0.0]],
        }
    }

    /// Same mean on every OD pair, no variability.
    pub fn uniform(count_per_interval: f64) -> Self {
        let mut mean = [[count_per_interval; 4]; 4];
        for (i, row) in mean.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        DemandTable { mean, std: [[0.0; 4]; 4] }
    }

    pub fn mean_count(&self, od: Od) -> f64 {
        self.mean[od.from.index()][od.to.index()]
    }

    pub fn std_count(&self, od: Od) -> f64 {
        self.std[od.from.index()][od.to.index()]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for od in Od::all() {
            let (m, s) = (self.mean_count(od), self.std_count(od));
            if !(m.is_finite() && m >= 0.0 && s.is_finite() && s >= 0.0) {
                return Err(SimError::InvalidDemand(od));
            }
        }
        Ok(())
    }
}

/// How interval counts are obtained for an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DemandSampling {
    /// Each interval count ~ Normal(mean, std) truncated at zero.
    #[default]
    Sampled,
    /// Every interval uses the table mean.
    Mean,
}

/// Half-open interval `[start, end)` in scenario seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Self {
        TimeWindow { start, end }
    }

    pub fn always() -> Self {
        TimeWindow { start: 0.0, end: f64::INFINITY }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn is_valid(&self) -> bool {
        self.start.is_finite() && self.start >= 0.0 && self.start < self.end
    }

    pub fn shifted(&self, by: f64) -> Self {
        TimeWindow { start: self.start + by, end: self.end + by }
    }
}

/// Multiplies the rate of a set of OD pairs inside a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandTransform {
    /// `(from, to)` pairs, 1-based.
    pub ods: Vec<(u8, u8)>,
    pub multiplier: f64,
    pub window: TimeWindow,
}

impl DemandTransform {
    pub fn resolve(&self) -> Result<Vec<Od>, SimError> {
        self.ods.iter().map(|&(f, t)| Od::new(f, t)).collect()
    }
}

/// Arrival rates (veh/s) for a whole episode, as a function of time.
#[derive(Clone, Debug)]
pub struct DemandProfile {
    warmup: f64,
    warmup_rates: [f64; OD_COUNT],
    /// Per interval, per OD, veh/s.
    intervals: Vec<[f64; OD_COUNT]>,
    transforms: Vec<(Vec<bool>, f64, TimeWindow)>,
    shares: [(usize, f64); LANE_COUNT],
}

impl DemandProfile {
    /// Draws one episode of interval counts. The number of draws depends
    /// only on `duration`, never on the transforms.
    pub fn build(
        geometry: &IntersectionGeometry,
        table: &DemandTable,
        sampling: DemandSampling,
        warmup: f64,
        duration: f64,
        transforms: &[DemandTransform],
        rng: &mut Stream,
    ) -> Result<Self, SimError> {
        table.validate()?;
        let n_intervals = ((duration / INTERVAL_SECONDS).ceil() as usize).max(1);
        let mut warmup_rates = [0.0; OD_COUNT];
        for od in Od::all() {
            warmup_rates[od.index()] = table.mean_count(od) / INTERVAL_SECONDS;
        }
        let mut intervals = Vec::with_capacity(n_intervals);
        for _ in 0..n_intervals {
            let mut rates = [0.0; OD_COUNT];
            for od in Od::all() {
                let (m, s) = (table.mean_count(od), table.std_count(od));
                let count = match sampling {
                    DemandSampling::Mean => m,
                    DemandSampling::Sampled if s > 0.0 => {
                        let normal = Normal::new(m, s).map_err(|_| SimError::InvalidDemand(od))?;
                        normal.sample(rng).max(0.0)
                    }
                    DemandSampling::Sampled => {
                        // keep draw count independent of the std values
                        let _: f64 = rng.random();
                        m
                    }
                };
                rates[od.index()] = count / INTERVAL_SECONDS;
            }
            intervals.push(rates);
        }
        let mut compiled = Vec::with_capacity(transforms.len());
        for t in transforms {
            if !(t.multiplier.is_finite() && t.multiplier >= 0.0) {
                return Err(SimError::InvalidParameter("demand multiplier"));
            }
            let mut mask = vec![false; OD_COUNT];
            for od in t.resolve()? {
                mask[od.index()] = true;
            }
            compiled.push((mask, t.multiplier, t.window));
        }
        let shares = std::array::from_fn(|i| {
            let lane = &geometry.lanes()[i];
            (lane.od.index(), lane.share)
        });
        Ok(DemandProfile { warmup, warmup_rates, intervals, transforms: compiled, shares })
    }

    pub fn warmup(&self) -> f64 {
        self.warmup
    }

    /// OD rate at absolute simulation time `t` (warm-up included).
    pub fn od_rate(&self, od: Od, t: f64) -> f64 {
        self.od_rates(t)[od.index()]
    }

    pub fn od_rates(&self, t: f64) -> [f64; OD_COUNT] {
        if t < self.warmup {
            return self.warmup_rates;
        }
        let s = t - self.warmup;
        let k = ((s / INTERVAL_SECONDS) as usize).min(self.intervals.len() - 1);
        let mut rates = self.intervals[k];
        for (mask, mult, window) in &self.transforms {
            if window.contains(s) {
                for (r, &hit) in rates.iter_mut().zip(mask) {
                    if hit {
                        *r *= mult;
                    }
                }
            }
        }
        rates
    }

    /// Per-lane arrival rates at absolute time `t`.
    pub fn lane_rates(&self, t: f64) -> [f64; LANE_COUNT] {
        let od = self.od_rates(t);
        std::array::from_fn(|i| {
            let (k, share) = self.shares[i];
            od[k] * share
        })
    }

    /// Interval counts (veh per interval) drawn for this episode.
    pub fn interval_counts(&self) -> impl Iterator<Item = [f64; OD_COUNT]> + '_ {
        self.intervals.iter().map(|r| r.map(|x| x * INTERVAL_SECONDS))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamTag};

    fn geometry() -> IntersectionGeometry {
        IntersectionGeometry::new(500.0).unwrap()
    }

    #[test]
    fn mean_sampling_reproduces_table() {
        let g = geometry();
        let table = DemandTable::reference();
        let mut rng = stream(1, StreamTag::Demand, 0);
        let p = DemandProfile::build(&g, &table, DemandSampling::Mean, 600.0, 3600.0, &[], &mut rng).unwrap();
        let od = Od::new(2, 4).unwrap();
        assert_eq!(p.od_rate(od, 1000.0) * INTERVAL_SECONDS, 219.2);
        let lanes: f64 = p.lane_rates(1000.0).iter().sum();
        let total: f64 = Od::all().map(|o| table.mean_count(o)).sum();
        assert!((lanes * INTERVAL_SECONDS - total).abs() < 1e-9);
    }

    #[test]
    fn sampled_counts_are_truncated_at_zero() {
        let g = geometry();
        let mut table = DemandTable::reference();
        table.std[0][1] = 1000.0;
        let mut rng = stream(3, StreamTag::Demand, 0);
        let p = DemandProfile::build(&g, &table, DemandSampling::Sampled, 0.0, 4.0 * 3600.0, &[], &mut rng).unwrap();
        assert_eq!(p.interval_counts().count(), 8);
        assert!(p.interval_counts().all(|c| c.iter().all(|&x| x >= 0.0)));
    }

    #[test]
    fn transforms_compose_and_leave_outside_untouched() {
        let g = geometry();
        let table = DemandTable::reference();
        let tf = vec![
            DemandTransform { ods: vec![(1, 4), (2, 4)], multiplier: 2.0, window: TimeWindow::new(900.0, 2700.0) },
            DemandTransform { ods: vec![(2, 4)], multiplier: 1.5, window: TimeWindow::new(1800.0, 3600.0) },
        ];
        let base = DemandProfile::build(
            &g,
            &table,
            DemandSampling::Sampled,
            600.0,
            3600.0,
            &[],
            &mut stream(5, StreamTag::Demand, 0),
        )
        .unwrap();
        let scen = DemandProfile::build(
            &g,
            &table,
            DemandSampling::Sampled,
            600.0,
            3600.0,
            &tf,
            &mut stream(5, StreamTag::Demand, 0),
        )
        .unwrap();
        let od24 = Od::new(2, 4).unwrap();
        let at = |p: &DemandProfile, s: f64| p.od_rate(od24, 600.0 + s);
        assert_eq!(at(&scen, 100.0).to_bits(), at(&base, 100.0).to_bits());
        assert_eq!(at(&scen, 1000.0), at(&base, 1000.0) * 2.0);
        assert_eq!(at(&scen, 2000.0), at(&base, 2000.0) * 2.0 * 1.5);
        assert_eq!(at(&scen, 3000.0), at(&base, 3000.0) * 1.5);
        let od31 = Od::new(3, 1).unwrap();
        assert_eq!(scen.od_rate(od31, 2000.0).to_bits(), base.od_rate(od31, 2000.0).to_bits());
    }
}
