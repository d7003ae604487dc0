//! System configuration and the line-oriented `key = value` config format.
//!
//! ```text
//! # desk profile with a denser deployment
//! n_tx_aps = 4
//! users = 3
//! rho_db = 10
//! ```
//!
//! Keys not consumed by any section are reported as errors by the caller via
//! [`KeyValues::finish`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CoreError, Result};

/// Parsed `key = value` pairs, consumed section by section.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CoreError::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(CoreError::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            if entries
                .insert(key.clone(), (i + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(CoreError::Parse {
                    line: i + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    /// Remove `key` and parse it, leaving `target` untouched when absent.
    pub fn take<T: FromStr>(&mut self, key: &str, target: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((line, v)) = self.entries.remove(key) {
            *target = v.parse().map_err(|e| CoreError::Parse {
                line,
                msg: format!("`{key}`: {e}"),
            })?;
        }
        Ok(())
    }

    /// Remove and parse a comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str, target: &mut Vec<T>) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((line, v)) = self.entries.remove(key) {
            *target = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|e| CoreError::Parse {
                        line,
                        msg: format!("`{key}`: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    /// Error if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some((k, (line, _))) = self.entries.into_iter().next() {
            return Err(CoreError::Parse {
                line,
                msg: format!("unknown key `{k}`"),
            });
        }
        Ok(())
    }
}

/// Deployment, array, channel and link-budget parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    /// Transmit access points `N_T`.
    pub n_tx_aps: usize,
    /// Receive (sensing) access points `N_R`.
    pub n_rx_aps: usize,
    /// Single-antenna users `K`.
    pub users: usize,
    /// Point clutter sources `N_C`.
    pub clutters: usize,
    pub tx_rows: usize,
    pub tx_cols: usize,
    pub rx_rows: usize,
    pub rx_cols: usize,
    /// Per-TAP transmit SNR in dB.
    pub rho_db: f64,
    /// Uplink pilot SNR in dB.
    pub pilot_snr_db: f64,
    pub tau_c: usize,
    pub tau_p: usize,
    pub pathloss_exponent: f64,
    /// Pathloss at 1 m, dB.
    pub pathloss_ref_db: f64,
    pub rician_min: f64,
    pub rician_max: f64,
    pub antenna_area: f64,
    /// Carrier wavelength in metres.
    pub wavelength: f64,
    pub rcs_target: f64,
    pub rcs_clutter: f64,
    pub area_side: f64,
    pub ap_height: f64,
    pub node_height: f64,
    /// Receiver noise power in dB relative to the unit-SNR reference. Channel
    /// gains are expressed relative to this floor.
    pub noise_floor_db: f64,
    /// Noise floor of the sensing receivers, applied to echo amplitudes.
    pub sensing_noise_floor_db: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SystemConfig {
    /// Small deployment used for laptop-scale experiments.
    pub fn desk() -> Self {
        Self {
            n_tx_aps: 4,
            n_rx_aps: 2,
            users: 3,
            clutters: 1,
            tx_rows: 2,
            tx_cols: 1,
            rx_rows: 2,
            rx_cols: 2,
            rho_db: 10.0,
            pilot_snr_db: 10.0,
            tau_c: 196,
            tau_p: 4,
            pathloss_exponent: 3.0,
            pathloss_ref_db: -40.0,
            rician_min: 1.0,
            rician_max: 3.0,
            antenna_area: 1.0,
            wavelength: 0.1,
            rcs_target: 1.0,
            rcs_clutter: 1.0,
            area_side: 100.0,
            ap_height: 10.0,
            node_height: 1.5,
            noise_floor_db: DEFAULT_NOISE_FLOOR_DB,
            sensing_noise_floor_db: DEFAULT_SENSING_NOISE_FLOOR_DB,
            seed: 1,
        }
    }

    /// Full-size deployment (8 TAPs with 2×2 arrays, 4 RAPs, 4 users, 2 clutters).
    pub fn full() -> Self {
        Self {
            n_tx_aps: 8,
            n_rx_aps: 4,
            users: 4,
            clutters: 2,
            tx_rows: 2,
            tx_cols: 2,
            rx_rows: 2,
            rx_cols: 2,
            ..Self::desk()
        }
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx_rows * self.tx_cols
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx_rows * self.rx_cols
    }

    /// Length of a stacked user channel, `N_T·M_T`.
    pub fn stacked_dim(&self) -> usize {
        self.n_tx_aps * self.tx_antennas()
    }

    pub fn rho(&self) -> f64 {
        db_to_linear(self.rho_db)
    }

    pub fn pilot_snr(&self) -> f64 {
        db_to_linear(self.pilot_snr_db)
    }

    /// Total transmit budget `ρ·N_T`.
    pub fn power_budget(&self) -> f64 {
        self.rho() * self.n_tx_aps as f64
    }

    /// Fraction of the coherence block left for data, `(τ_c − τ_p)/τ_c`.
    pub fn kappa(&self) -> f64 {
        (self.tau_c - self.tau_p) as f64 / self.tau_c as f64
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_tx_aps", self.n_tx_aps),
            ("n_rx_aps", self.n_rx_aps),
            ("users", self.users),
            ("tx_rows", self.tx_rows),
            ("tx_cols", self.tx_cols),
            ("rx_rows", self.rx_rows),
            ("rx_cols", self.rx_cols),
            ("tau_c", self.tau_c),
            ("tau_p", self.tau_p),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(CoreError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.tau_p < self.users {
            return Err(CoreError::PilotsTooShort {
                tau_p: self.tau_p,
                users: self.users,
            });
        }
        if self.tau_p >= self.tau_c {
            return Err(CoreError::Config(format!(
                "tau_p ({}) must be shorter than tau_c ({})",
                self.tau_p, self.tau_c
            )));
        }
        if self.rician_min.is_nan() || self.rician_max.is_nan() || self.rician_min > self.rician_max || self.rician_min < 0.0 {
            return Err(CoreError::Config(format!(
                "rician range [{}, {}] is invalid",
                self.rician_min, self.rician_max
            )));
        }
        let positive = [
            ("antenna_area", self.antenna_area),
            ("wavelength", self.wavelength),
            ("area_side", self.area_side),
            ("pathloss_exponent", self.pathloss_exponent),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(CoreError::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("rho_db", self.rho_db),
            ("pilot_snr_db", self.pilot_snr_db),
            ("noise_floor_db", self.noise_floor_db),
            ("sensing_noise_floor_db", self.sensing_noise_floor_db),
        ] {
            if !v.is_finite() {
                return Err(CoreError::Config(format!("{name} must be finite")));
            }
        }
        if self.rcs_target < 0.0 || self.rcs_clutter < 0.0 {
            return Err(CoreError::Config("RCS variances must be non-negative".into()));
        }
        Ok(())
    }

    /// Overwrite fields from `kv`, consuming the recognised keys.
    pub fn apply(&mut self, kv: &mut KeyValues) -> Result<()> {
        kv.take("n_tx_aps", &mut self.n_tx_aps)?;
        kv.take("n_rx_aps", &mut self.n_rx_aps)?;
        kv.take("users", &mut self.users)?;
        kv.take("clutters", &mut self.clutters)?;
        kv.take("tx_rows", &mut self.tx_rows)?;
        kv.take("tx_cols", &mut self.tx_cols)?;
        kv.take("rx_rows", &mut self.rx_rows)?;
        kv.take("rx_cols", &mut self.rx_cols)?;
        kv.take("rho_db", &mut self.rho_db)?;
        kv.take("pilot_snr_db", &mut self.pilot_snr_db)?;
        kv.take("tau_c", &mut self.tau_c)?;
        kv.take("tau_p", &mut self.tau_p)?;
        kv.take("pathloss_exponent", &mut self.pathloss_exponent)?;
        kv.take("pathloss_ref_db", &mut self.pathloss_ref_db)?;
        kv.take("rician_min", &mut self.rician_min)?;
        kv.take("rician_max", &mut self.rician_max)?;
        kv.take("antenna_area", &mut self.antenna_area)?;
        kv.take("wavelength", &mut self.wavelength)?;
        kv.take("rcs_target", &mut self.rcs_target)?;
        kv.take("rcs_clutter", &mut self.rcs_clutter)?;
        kv.take("area_side", &mut self.area_side)?;
        kv.take("ap_height", &mut self.ap_height)?;
        kv.take("node_height", &mut self.node_height)?;
        kv.take("noise_floor_db", &mut self.noise_floor_db)?;
        kv.take("sensing_noise_floor_db", &mut self.sensing_noise_floor_db)?;
        kv.take("seed", &mut self.seed)?;
        Ok(())
    }

    /// Serialise as `key = value` lines accepted by [`SystemConfig::apply`].
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_tx_aps = {}", self.n_tx_aps);
        let _ = writeln!(s, "n_rx_aps = {}", self.n_rx_aps);
        let _ = writeln!(s, "users = {}", self.users);
        let _ = writeln!(s, "clutters = {}", self.clutters);
        let _ = writeln!(s, "tx_rows = {}", self.tx_rows);
        let _ = writeln!(s, "tx_cols = {}", self.tx_cols);
        let _ = writeln!(s, "rx_rows = {}", self.rx_rows);
        let _ = writeln!(s, "rx_cols = {}", self.rx_cols);
        let _ = writeln!(s, "rho_db = {}", self.rho_db);
        let _ = writeln!(s, "pilot_snr_db = {}", self.pilot_snr_db);
        let _ = writeln!(s, "tau_c = {}", self.tau_c);
        let _ = writeln!(s, "tau_p = {}", self.tau_p);
        let _ = writeln!(s, "pathloss_exponent = {}", self.pathloss_exponent);
        let _ = writeln!(s, "pathloss_ref_db = {}", self.pathloss_ref_db);
        let _ = writeln!(s, "rician_min = {}", self.rician_min);
        let _ = writeln!(s, "rician_max = {}", self.rician_max);
        let _ = writeln!(s, "antenna_area = {}", self.antenna_area);
        let _ = writeln!(s, "wavelength = {}", self.wavelength);
        let _ = writeln!(s, "rcs_target = {}", self.rcs_target);
        let _ = writeln!(s, "rcs_clutter = {}", self.rcs_clutter);
        let _ = writeln!(s, "area_side = {}", self.area_side);
        let _ = writeln!(s, "ap_height = {}", self.ap_height);
        let _ = writeln!(s, "node_height = {}", self.node_height);
        let _ = writeln!(s, "noise_floor_db = {}", self.noise_floor_db);
        let _ = writeln!(s, "sensing_noise_floor_db = {}", self.sensing_noise_floor_db);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// Default receiver noise floor, dB below the unit-gain reference.
pub const DEFAULT_NOISE_FLOOR_DB: f64 = -80.0;

/// Default sensing receiver noise floor.
pub const DEFAULT_SENSING_NOISE_FLOOR_DB: f64 = -100.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
