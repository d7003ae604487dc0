//! Experiment settings: the system configuration plus training, sweep and
//! sample-count keys, all read from one `key = value` file.
//!
//! Besides every [`SystemConfig`] key the file accepts:
//!
//! ```text
//! profile = desk            # desk | full, applied before any other key
//! train_samples = 2000
//! val_samples = 500
//! test_samples = 500
//! epochs = 150
//! batch = 100
//! patience = 20
//! lr = 1e-4
//! penalty_comm = 1000
//! penalty_sensing = 1000
//! margin = 0.2
//! almmo_instances = 500
//! sc_points = 0.5, 1.0, 1.5
//! cc_points = 0.02, 0.05
//! joint_points = 0, 0.5, 1
//! tau_p_list = 4, 8, 16
//! k_list = 2, 4
//! realizations = 1000
//! chi_list = 0, 0.05, 0.1
//! rician_list = 1, 5, 10
//! runtime_instances = 100
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use cfisac_core::metrics::{Regime, RegimeSpec};
use cfisac_core::{KeyValues, SystemConfig};
use cfisac_stcib::{Penalty, TrainSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Split {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Training {
    pub epochs: usize,
    pub batch: usize,
    pub patience: usize,
    pub lr: f64,
    pub penalty: Penalty,
}

impl Default for Training {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch: 100,
            patience: 20,
            lr: 1e-4,
            penalty: Penalty::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub system: SystemConfig,
    pub split: Split,
    pub training: Training,
    pub almmo_instances: usize,
    pub sc_points: Vec<f64>,
    pub cc_points: Vec<f64>,
    /// Values of `η`.
    pub joint_points: Vec<f64>,
    pub tau_p_list: Vec<usize>,
    pub k_list: Vec<usize>,
    pub realizations: usize,
    pub chi_list: Vec<f64>,
    pub rician_list: Vec<f64>,
    pub runtime_instances: usize,
}

impl Settings {
    pub fn desk() -> Self {
        Self {
            system: SystemConfig::desk(),
            split: Split {
                train: 2000,
                val: 500,
                test: 500,
            },
            training: Training::default(),
            almmo_instances: 500,
            sc_points: (1..=8).map(|i| 0.5 * i as f64).collect(),
            cc_points: vec![0.02, 0.05, 0.1, 0.15],
            joint_points: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            tau_p_list: vec![4, 8, 16, 24, 32, 40],
            k_list: vec![4],
            realizations: 1000,
            chi_list: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2],
            rician_list: vec![1.0, 3.0, 10.0],
            runtime_instances: 100,
        }
    }

    pub fn full() -> Self {
        Self {
            system: SystemConfig::full(),
            ..Self::desk()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut profile = String::from("desk");
        kv.take("profile", &mut profile)?;
        let mut s = match profile.as_str() {
            "desk" => Self::desk(),
            "full" => Self::full(),
            other => bail!("unknown profile `{other}` (expected desk or full)"),
        };
        s.system.apply(&mut kv)?;
        kv.take("train_samples", &mut s.split.train)?;
        kv.take("val_samples", &mut s.split.val)?;
        kv.take("test_samples", &mut s.split.test)?;
        let t = &mut s.training;
        kv.take("epochs", &mut t.epochs)?;
        kv.take("batch", &mut t.batch)?;
        kv.take("patience", &mut t.patience)?;
        kv.take("lr", &mut t.lr)?;
        kv.take("penalty_comm", &mut t.penalty.comm)?;
        kv.take("penalty_sensing", &mut t.penalty.sensing)?;
        kv.take("margin", &mut t.penalty.margin)?;
        kv.take("almmo_instances", &mut s.almmo_instances)?;
        kv.take_list("sc_points", &mut s.sc_points)?;
        kv.take_list("cc_points", &mut s.cc_points)?;
        kv.take_list("joint_points", &mut s.joint_points)?;
        kv.take_list("tau_p_list", &mut s.tau_p_list)?;
        kv.take_list("k_list", &mut s.k_list)?;
        kv.take("realizations", &mut s.realizations)?;
        kv.take_list("chi_list", &mut s.chi_list)?;
        kv.take_list("rician_list", &mut s.rician_list)?;
        kv.take("runtime_instances", &mut s.runtime_instances)?;
        kv.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.split.train == 0 || self.split.val == 0 || self.split.test == 0 {
            bail!("train, validation and test sets must be non-empty");
        }
        if self.training.patience >= self.training.epochs {
            bail!("patience must be smaller than the epoch limit");
        }
        for (name, list) in [
            ("sc_points", &self.sc_points),
            ("cc_points", &self.cc_points),
            ("joint_points", &self.joint_points),
            ("chi_list", &self.chi_list),
            ("rician_list", &self.rician_list),
        ] {
            check_sorted(name, list)?;
        }
        check_sorted("tau_p_list", &self.tau_p_list)?;
        check_sorted("k_list", &self.k_list)?;
        Ok(())
    }

    /// Training spec for one design point.
    pub fn train_spec(&self, regime: RegimeSpec, seed: u64) -> TrainSpec {
        let t = &self.training;
        TrainSpec {
            regime,
            penalty: t.penalty,
            batch: t.batch,
            max_epochs: t.epochs,
            patience: t.patience,
            lr: t.lr,
            seed,
        }
    }

    /// Regime spec with `point` as the regime's threshold, or as `η` for the
    /// joint regime.
    pub fn regime_at(&self, regime: Regime, point: f64) -> RegimeSpec {
        RegimeSpec::from_parts(regime, point, point, point, self.system.kappa())
    }

    pub fn points(&self, regime: Regime) -> &[f64] {
        match regime {
            Regime::SensingCentric => &self.sc_points,
            Regime::CommCentric => &self.cc_points,
            Regime::Joint => &self.joint_points,
        }
    }
}

fn check_sorted<T: PartialOrd>(name: &str, list: &[T]) -> Result<()> {
    if list.is_empty() {
        bail!("`{name}` must not be empty");
    }
    if list.windows(2).any(|w| w[0] > w[1]) {
        bail!("`{name}` must be sorted ascending");
    }
    Ok(())
}
