//! Wall-clock accounting for a full experiment, bucketed the way the two
//! methods are usually costed: a one-time setup phase (ensemble training for
//! the bootstrap, gradient collection plus eigendecomposition for the delta
//! method) and per-prediction phases over the training and test sets.

use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Setup cost plus prediction cost over each data split, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub initial: f64,
    pub prediction_train: f64,
    pub prediction_test: f64,
    pub total: f64,
}

impl PhaseTimes {
    pub fn sum_parts(&self) -> f64 {
        self.initial + self.prediction_train + self.prediction_test
    }

    fn close(&mut self) {
        self.total = self.sum_parts();
    }
}

/// Full run accounting. `delta.initial` covers gradient collection and the
/// eigendecomposition; the single network the delta method differentiates is
/// timed separately under `delta_training` so the two methods' setup columns
/// stay comparable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub dataset: f64,
    pub bootstrap: PhaseTimes,
    pub delta_training: f64,
    pub delta: PhaseTimes,
    pub analysis: f64,
    pub total: f64,
    /// Bootstrap total over the delta route's total (its network training
    /// plus its phases): how many times faster the delta route was. Zero
    /// when the delta route took no measurable time.
    pub delta_speedup: f64,
}

impl TimingReport {
    /// Seconds accounted to a named bucket.
    pub fn covered(&self) -> f64 {
        self.dataset + self.bootstrap.total + self.delta_training + self.delta.total + self.analysis
    }

    /// Share of the total wall time the buckets explain.
    pub fn coverage(&self) -> f64 {
        if self.total > 0.0 {
            self.covered() / self.total
        } else {
            1.0
        }
    }
}

/// Accumulates bucket times while a run is in progress.
#[derive(Debug)]
pub struct TimingBuilder {
    started: Instant,
    report: TimingReport,
}

/// Destination bucket for one timed span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    Dataset,
    BootstrapInitial,
    BootstrapPredictTrain,
    BootstrapPredictTest,
    DeltaTraining,
    DeltaInitial,
    DeltaPredictTrain,
    DeltaPredictTest,
    Analysis,
}

impl TimingBuilder {
    pub fn start() -> Self {
        TimingBuilder {
            started: Instant::now(),
            report: TimingReport::default(),
        }
    }

    pub fn add(&mut self, bucket: Bucket, seconds: f64) {
        let r = &mut self.report;
        match bucket {
            Bucket::Dataset => r.dataset += seconds,
            Bucket::BootstrapInitial => r.bootstrap.initial += seconds,
            Bucket::BootstrapPredictTrain => r.bootstrap.prediction_train += seconds,
            Bucket::BootstrapPredictTest => r.bootstrap.prediction_test += seconds,
            Bucket::DeltaTraining => r.delta_training += seconds,
            Bucket::DeltaInitial => r.delta.initial += seconds,
            Bucket::DeltaPredictTrain => r.delta.prediction_train += seconds,
            Bucket::DeltaPredictTest => r.delta.prediction_test += seconds,
            Bucket::Analysis => r.analysis += seconds,
        }
    }

    /// Run `f`, crediting its wall time to `bucket`.
    pub fn time<T>(&mut self, bucket: Bucket, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.add(bucket, t0.elapsed().as_secs_f64());
        out
    }

    /// Close the per-method totals and the overall wall clock.
    pub fn finish(mut self) -> TimingReport {
        self.report.bootstrap.close();
        self.report.delta.close();
        self.report.total = self.started.elapsed().as_secs_f64();
        let delta_total = self.report.delta_training + self.report.delta.total;
        self.report.delta_speedup = if delta_total > 0.0 {
            self.report.bootstrap.total / delta_total
        } else {
            0.0
        };
        self.report
    }
}
