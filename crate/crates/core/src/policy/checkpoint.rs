//! Versioned checkpoint format: named tensors with shapes, values stored
//! as hex-encoded f64 bits so round-trips are bitwise exact. The same
//! container carries optimizer state (extra tensors) and string metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{PolicyParams, SlateConfig};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CHECKPOINT_HEADER: &str = "# stormcrew checkpoint v1";

pub fn render(meta: &[(String, String)], tensors: &[(String, &Tensor)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CHECKPOINT_HEADER}");
    for (k, v) in meta {
        let _ = writeln!(s, "meta {k} {v}");
    }
    for (name, t) in tensors {
        let _ = writeln!(s, "tensor {name} {} {}", t.rows, t.cols);
        for r in 0..t.rows {
            let row: Vec<String> = (0..t.cols)
                .map(|c| format!("{:016x}", t.at(r, c).to_bits()))
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s.push_str("end\n");
    s
}

pub struct Archive {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Archive {
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Config(format!("checkpoint missing tensor {name}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config(format!("checkpoint missing/invalid meta {key}")))
    }
}

pub fn parse(text: &str) -> Result<Archive> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Config("empty checkpoint".into()))?;
    if header.trim() != CHECKPOINT_HEADER {
        return Err(Error::Config(format!(
            "bad checkpoint header {header:?} (expect {CHECKPOINT_HEADER:?})"
        )));
    }
    let mut meta = BTreeMap::new();
    let mut tensors = Vec::new();
    let mut ended = false;
    while let Some((ln, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "meta" if toks.len() >= 3 => {
                meta.insert(toks[1].to_string(), toks[2..].join(" "));
            }
            "tensor" if toks.len() == 4 => {
                let name = toks[1].to_string();
                let rows: usize = toks[2]
                    .parse()
                    .map_err(|_| bad_line(ln, "tensor rows"))?;
                let cols: usize = toks[3]
                    .parse()
                    .map_err(|_| bad_line(ln, "tensor cols"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (rln, row) = lines
                        .next()
                        .ok_or_else(|| bad_line(ln, "truncated tensor block"))?;
                    for tok in row.split_whitespace() {
                        let bits = u64::from_str_radix(tok, 16)
                            .map_err(|_| bad_line(rln, "hex f64"))?;
                        data.push(f64::from_bits(bits));
                    }
                }
                if data.len() != rows * cols {
                    return Err(bad_line(ln, "tensor element count"));
                }
                tensors.push((name, Tensor::from_vec(rows, cols, data)));
            }
            "end" => {
                ended = true;
                break;
            }
            _ => return Err(bad_line(ln, "unrecognized record")),
        }
    }
    if !ended {
        return Err(Error::Config("checkpoint missing end marker".into()));
    }
    Ok(Archive { meta, tensors })
}

fn bad_line(ln: usize, what: &str) -> Error {
    Error::Config(format!("checkpoint line {}: {what}", ln + 1))
}

impl PolicyParams {
    pub fn meta(&self) -> Vec<(String, String)> {
        vec![
            ("max_components".into(), self.slate.max_components.to_string()),
            ("max_crews".into(), self.slate.max_crews.to_string()),
            ("hidden".into(), self.slate.hidden.to_string()),
            ("embed".into(), self.slate.embed.to_string()),
            ("enc_hidden".into(), self.slate.enc_hidden.to_string()),
            ("keep_top".into(), self.slate.keep_top.to_string()),
        ]
    }

    pub fn render_checkpoint(&self, extra: &[(String, &Tensor)]) -> String {
        let mut tensors: Vec<(String, &Tensor)> = self
            .tensors()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t))
            .collect();
        tensors.extend(extra.iter().map(|(n, t)| (n.clone(), *t)));
        render(&self.meta(), &tensors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render_checkpoint(&[]))?;
        Ok(())
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let slate = SlateConfig {
            max_components: archive.meta_parse("max_components")?,
            max_crews: archive.meta_parse("max_crews")?,
            hidden: archive.meta_parse("hidden")?,
            embed: archive.meta_parse("embed")?,
            enc_hidden: archive.meta_parse("enc_hidden")?,
            keep_top: archive.meta_parse("keep_top")?,
        };
        let mut params = PolicyParams::zeros(slate);
        for (name, slot) in params.tensors_mut() {
            let t = archive.tensor(name)?;
            if (t.rows, t.cols) != (slot.rows, slot.cols) {
                return Err(Error::Config(format!(
                    "checkpoint tensor {name} is {}x{}, expected {}x{}",
                    t.rows, t.cols, slot.rows, slot.cols
                )));
            }
            *slot = t.clone();
        }
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let archive = parse(&std::fs::read_to_string(path)?)?;
        Self::from_archive(&archive)
    }
}
