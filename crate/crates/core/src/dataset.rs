//! Sample sets of true and estimated channels over one fixed scene, and their
//! on-disk container.
//!
//! The container starts with a UTF-8 header:
//!
//! ```text
//! CFISAC-DATASET 1
//! n_tx_aps = 4
//! tx_antennas = 2
//! users = 3
//! n_rx_aps = 2
//! rx_antennas = 4
//! clutters = 1
//! samples = 3000
//! seed = 1
//! sections = f_true,f_hat,G_t,G_c
//! [config]
//! ...
//! [payload]
//! ```
//!
//! followed by little-endian `f64` pairs `(re, im)` in row-major order:
//! `f_true[sample][user][antenna]`, `f_hat[sample][user][antenna]`,
//! `G_t[rap][row][col]` and `G_c[rap][clutter][row][col]`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use num_complex::Complex64;

use crate::channel::{build_scene, sample_channels, sensing_response, ChannelStats, SensingResponse};
use crate::config::{KeyValues, SystemConfig};
use crate::error::{CoreError, Result};
use crate::estimation::{estimate_channels, make_pilots, pilot_energy};
use crate::linalg::{CMat, CVec};
use crate::rng::{domain, stream};

const MAGIC: &str = "CFISAC-DATASET 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: SystemConfig,
    /// `[sample][user]` stacked true channels `f_k`.
    pub f_true: Vec<Vec<CVec>>,
    /// `[sample][user]` stacked MMSE estimates `f̂_k`.
    pub f_hat: Vec<Vec<CVec>>,
    pub sensing: SensingResponse,
}

/// The scene and sensing response shared by every sample of `config`.
pub fn fixed_environment(config: &SystemConfig) -> Result<(ChannelStats, SensingResponse)> {
    config.validate()?;
    let scene = build_scene(config, &mut stream(config.seed, domain::SCENE, 0))?;
    let stats = ChannelStats::new(&scene, config)?;
    let sensing = sensing_response(&scene, config, &mut stream(config.seed, domain::SENSING, 0));
    Ok((stats, sensing))
}

impl Dataset {
    /// Draw `samples` channel realizations with their pilot-based estimates.
    /// Sample `s` only depends on `(seed, s)`.
    pub fn generate(config: &SystemConfig, samples: usize) -> Result<Self> {
        let (stats, sensing) = fixed_environment(config)?;
        let book = make_pilots(config.users, config.tau_p)?;
        let energy = pilot_energy(config.pilot_snr(), config.tau_p, config.users);
        let mut f_true = Vec::with_capacity(samples);
        let mut f_hat = Vec::with_capacity(samples);
        for s in 0..samples as u64 {
            let channels = sample_channels(&stats, &mut stream(config.seed, domain::SAMPLE, s));
            let est = estimate_channels(
                &stats,
                &channels,
                &book,
                energy,
                &mut stream(config.seed, domain::PILOT, s),
            )?;
            f_true.push(channels.stacked_all());
            f_hat.push(est.stacked_all());
        }
        Ok(Self {
            config: config.clone(),
            f_true,
            f_hat,
            sensing,
        })
    }

    pub fn len(&self) -> usize {
        self.f_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_true.is_empty()
    }

    pub fn users(&self) -> usize {
        self.config.users
    }

    /// Copy of the samples in `range`.
    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            config: self.config.clone(),
            f_true: self.f_true[range.clone()].to_vec(),
            f_hat: self.f_hat[range].to_vec(),
            sensing: self.sensing.clone(),
        }
    }

    /// Consecutive train / validation / test parts with the given sizes.
    pub fn split(&self, train: usize, val: usize, test: usize) -> Result<(Self, Self, Self)> {
        if train + val + test > self.len() {
            return Err(CoreError::Config(format!(
                "split {train}/{val}/{test} needs more than {} samples",
                self.len()
            )));
        }
        Ok((
            self.slice(0..train),
            self.slice(train..train + val),
            self.slice(train + val..train + val + test),
        ))
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        let c = &self.config;
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "n_tx_aps = {}", c.n_tx_aps)?;
        writeln!(out, "tx_antennas = {}", c.tx_antennas())?;
        writeln!(out, "users = {}", c.users)?;
        writeln!(out, "n_rx_aps = {}", c.n_rx_aps)?;
        writeln!(out, "rx_antennas = {}", c.rx_antennas())?;
        writeln!(out, "clutters = {}", c.clutters)?;
        writeln!(out, "samples = {}", self.len())?;
        writeln!(out, "seed = {}", c.seed)?;
        writeln!(out, "sections = f_true,f_hat,G_t,G_c")?;
        writeln!(out, "[config]")?;
        out.write_all(c.to_key_values().as_bytes())?;
        writeln!(out, "[payload]")?;

        let mut put = |z: &Complex64| -> std::io::Result<()> {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())
        };
        for set in [&self.f_true, &self.f_hat] {
            for sample in set {
                for f in sample {
                    f.iter().try_for_each(&mut put)?;
                }
            }
        }
        for g in &self.sensing.g_target {
            write_matrix(g, &mut put)?;
        }
        for rap in &self.sensing.g_clutter {
            for g in rap {
                write_matrix(g, &mut put)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut line = String::new();
        input.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(CoreError::Format(format!("bad magic `{}`", line.trim_end())));
        }
        let dims_text = read_until(&mut input, "[config]")?;
        let config_text = read_until(&mut input, "[payload]")?;

        let mut config = SystemConfig::default();
        let mut kv = KeyValues::parse(&config_text)?;
        config.apply(&mut kv)?;
        kv.finish()?;
        config.validate()?;

        let mut dims = KeyValues::parse(&dims_text)?;
        let mut samples = 0usize;
        dims.take("samples", &mut samples)?;
        let expect = [
            ("n_tx_aps", config.n_tx_aps),
            ("tx_antennas", config.tx_antennas()),
            ("users", config.users),
            ("n_rx_aps", config.n_rx_aps),
            ("rx_antennas", config.rx_antennas()),
            ("clutters", config.clutters),
        ];
        for (key, want) in expect {
            let mut got = usize::MAX;
            dims.take(key, &mut got)?;
            if got != want {
                return Err(CoreError::Format(format!(
                    "header {key} = {got} disagrees with config ({want})"
                )));
            }
        }
        let mut seed = 0u64;
        dims.take("seed", &mut seed)?;
        if seed != config.seed {
            return Err(CoreError::Format("header seed disagrees with config".into()));
        }
        let mut sections = String::new();
        dims.take("sections", &mut sections)?;
        if sections != "f_true,f_hat,G_t,G_c" {
            return Err(CoreError::Format(format!("unexpected sections `{sections}`")));
        }
        dims.finish()?;

        let mut get = || -> Result<Complex64> {
            let mut b = [0u8; 16];
            input.read_exact(&mut b).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => CoreError::Format("payload truncated".into()),
                _ => CoreError::Io(e),
            })?;
            let re = f64::from_le_bytes(b[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(b[8..].try_into().expect("8 bytes"));
            Ok(Complex64::new(re, im))
        };
        let n = config.stacked_dim();
        let mut read_set = || -> Result<Vec<Vec<CVec>>> {
            (0..samples)
                .map(|_| {
                    (0..config.users)
                        .map(|_| {
                            let v = (0..n).map(|_| get()).collect::<Result<Vec<_>>>()?;
                            Ok(CVec::from_vec(v))
                        })
                        .collect()
                })
                .collect()
        };
        let f_true = read_set()?;
        let f_hat = read_set()?;
        let m = config.rx_antennas();
        let mut read_matrix = || -> Result<CMat> {
            let v = (0..m * n).map(|_| get()).collect::<Result<Vec<_>>>()?;
            Ok(CMat::from_row_slice(m, n, &v))
        };
        let g_target = (0..config.n_rx_aps)
            .map(|_| read_matrix())
            .collect::<Result<Vec<_>>>()?;
        let g_clutter = (0..config.n_rx_aps)
            .map(|_| (0..config.clutters).map(|_| read_matrix()).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(CoreError::Format("trailing bytes after payload".into()));
        }

        // Angles and reflection coefficients are regenerated from the
        // configuration; the response matrices come from the file.
        let (_, mut sensing) = fixed_environment(&config)?;
        sensing.g_target = g_target;
        sensing.g_clutter = g_clutter;
        Ok(Self {
            config,
            f_true,
            f_hat,
            sensing,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn write_matrix(
    g: &CMat,
    put: &mut impl FnMut(&Complex64) -> std::io::Result<()>,
) -> std::io::Result<()> {
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            put(&g[(r, c)])?;
        }
    }
    Ok(())
}

fn read_until<R: BufRead>(input: &mut R, marker: &str) -> Result<String> {
    let mut text = String::new();
    loop {
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Err(CoreError::Format(format!("missing `{marker}`")));
        }
        if line.trim_end() == marker {
            return Ok(text);
        }
        text.push_str(&line);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SystemConfig {
        SystemConfig {
            seed: 5,
            ..SystemConfig::desk()
        }
    }

    #[test]
    fn generation_is_deterministic_per_sample() {
        let a = Dataset::generate(&small(), 6).unwrap();
        let b = Dataset::generate(&small(), 3).unwrap();
        assert_eq!(a.slice(0..3), b);
        assert_eq!(a.f_hat[0].len(), 3);
        assert_eq!(a.f_true[0][0].len(), small().stacked_dim());
    }

    #[test]
    fn container_roundtrip_is_exact() {
        let a = Dataset::generate(&small(), 4).unwrap();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        let b = Dataset::read_from(buf.as_slice()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn payload_size_matches_header() {
        let a = Dataset::generate(&small(), 2).unwrap();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        let text = String::from_utf8_lossy(&buf);
        let start = text.find("[payload]\n").unwrap() + "[payload]\n".len();
        let c = small();
        let n = c.stacked_dim();
        let complex = 2 * 2 * c.users * n + c.n_rx_aps * (1 + c.clutters) * c.rx_antennas() * n;
        assert_eq!(buf.len() - start, complex * 16);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let a = Dataset::generate(&small(), 2).unwrap();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 8);
        assert!(matches!(Dataset::read_from(buf.as_slice()), Err(CoreError::Format(_))));
        assert!(matches!(Dataset::read_from(&b"nope\n"[..]), Err(CoreError::Format(_))));
    }

    #[test]
    fn split_checks_sizes() {
        let a = Dataset::generate(&small(), 5).unwrap();
        let (tr, va, te) = a.split(3, 1, 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (3, 1, 1));
        assert_eq!(te.f_true[0], a.f_true[4]);
        assert!(a.split(3, 2, 1).is_err());
    }
}
