//! Checkpoint files: a text header with the architecture, training context
//! and parameter shapes, followed by little-endian `f64` values in parameter
//! order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use cfisac_autodiff::Tensor;
use cfisac_core::metrics::{Regime, RegimeSpec};

use crate::error::{Result, StcibError};
use crate::model::{parameter_shapes, Architecture, Model, Params};

const MAGIC: &str = "CFISAC-STCIB 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub regime: RegimeSpec,
    pub seed: u64,
    pub epoch: usize,
    pub val_loss: f64,
}

fn bad(msg: impl Into<String>) -> StcibError {
    StcibError::Format(msg.into())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        let a = &self.model.arch;
        let r = &self.regime;
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "antennas {}", a.antennas)?;
        writeln!(out, "users {}", a.users)?;
        writeln!(out, "heads {}", a.heads)?;
        writeln!(out, "inducing {}", a.inducing)?;
        writeln!(out, "hidden {}", a.hidden)?;
        writeln!(out, "regime {}", r.regime)?;
        writeln!(out, "eta {:e}", r.eta)?;
        writeln!(out, "vartheta_th {:e}", r.vartheta_th)?;
        writeln!(out, "zeta_th {:e}", r.zeta_th)?;
        writeln!(out, "kappa {:e}", r.kappa)?;
        writeln!(out, "seed {}", self.seed)?;
        writeln!(out, "epoch {}", self.epoch)?;
        writeln!(out, "val_loss {:e}", self.val_loss)?;
        let p = &self.model.params;
        writeln!(out, "params {}", p.len())?;
        for (n, t) in p.names().iter().zip(p.tensors()) {
            let [b, rows, cols] = t.shape();
            writeln!(out, "{n} {b} {rows} {cols}")?;
        }
        writeln!(out, "[payload]")?;
        for t in p.tensors() {
            for x in t.data() {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut line = String::new();
        let mut next = |input: &mut BufReader<R>| -> Result<String> {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(bad("unexpected end of header"));
            }
            Ok(line.trim_end().to_string())
        };
        if next(&mut input)? != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        fn field(l: &str, key: &str) -> Result<String> {
            l.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected `{key}`, found `{l}`")))
        }
        fn parse<T: std::str::FromStr>(s: String, key: &str) -> Result<T> {
            s.parse().map_err(|_| bad(format!("bad value for `{key}`: `{s}`")))
        }
        let mut get = |input: &mut BufReader<R>, key: &str| -> Result<String> {
            field(&next(input)?, key)
        };
        let arch = Architecture {
            antennas: parse(get(&mut input, "antennas")?, "antennas")?,
            users: parse(get(&mut input, "users")?, "users")?,
            heads: parse(get(&mut input, "heads")?, "heads")?,
            inducing: parse(get(&mut input, "inducing")?, "inducing")?,
            hidden: parse(get(&mut input, "hidden")?, "hidden")?,
        };
        arch.validate()?;
        let regime: Regime = get(&mut input, "regime")?.parse()?;
        let eta = parse(get(&mut input, "eta")?, "eta")?;
        let vth = parse(get(&mut input, "vartheta_th")?, "vartheta_th")?;
        let zth = parse(get(&mut input, "zeta_th")?, "zeta_th")?;
        let kappa = parse(get(&mut input, "kappa")?, "kappa")?;
        let seed = parse(get(&mut input, "seed")?, "seed")?;
        let epoch = parse(get(&mut input, "epoch")?, "epoch")?;
        let val_loss = parse(get(&mut input, "val_loss")?, "val_loss")?;
        let count: usize = parse(get(&mut input, "params")?, "params")?;

        let expected = parameter_shapes(&arch);
        if count != expected.len() {
            return Err(bad(format!("{count} parameters, architecture has {}", expected.len())));
        }
        for (name, shape) in &expected {
            let l = next(&mut input)?;
            let mut parts = l.split_whitespace();
            let n = parts.next().unwrap_or_default();
            let dims: Vec<usize> = parts.map(|s| parse(s.to_string(), n)).collect::<Result<_>>()?;
            if n != name || dims != shape {
                return Err(bad(format!("parameter `{l}` does not match `{name}` {shape:?}")));
            }
        }
        if next(&mut input)? != "[payload]" {
            return Err(bad("missing payload marker"));
        }
        let mut parts = Vec::with_capacity(expected.len());
        let mut buf = [0u8; 8];
        for (name, shape) in expected {
            let len = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                input
                    .read_exact(&mut buf)
                    .map_err(|_| bad(format!("payload truncated in `{name}`")))?;
                data.push(f64::from_le_bytes(buf));
            }
            parts.push((name, Tensor::from_vec(shape, data)?));
        }
        if input.read(&mut buf)? != 0 {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            model: Model {
                arch,
                params: Params::from_parts(parts),
            },
            regime: RegimeSpec::from_parts(regime, eta, vth, zth, kappa),
            seed,
            epoch,
            val_loss,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}
