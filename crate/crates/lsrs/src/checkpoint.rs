//! Plain-text model checkpoints.
//!
//! Whitespace-separated tokens; floats are written as the 16 hex digits of
//! their IEEE-754 bits, so a save → load → save cycle reproduces the file
//! byte for byte. Layout:
//!
//! ```text
//! lsrs-checkpoint 1
//! input <c> <h> <w>
//! for_fraction <ortho> <blocks>
//! split <layer index>
//! layers <count>
//! <layer>...
//! end
//! ```
//!
//! Layers are a keyword followed by their fields; blocks nest their main
//! path as `<count>` further layers.

use std::path::Path;

use lsrs_core::layers::{CircularConv, Dense, GroupSort, Layer, OrthoConv, ResidualBlock, SkipBlock};
use lsrs_core::network::SplitNetwork;
use lsrs_core::Tensor4;

const MAGIC: &str = "lsrs-checkpoint";
const VERSION: u32 = 1;
const PER_LINE: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("token {index}: {msg}")]
    Parse { index: usize, msg: String },

    #[error("unsupported checkpoint version {0}")]
    Version(u32),

    #[error(transparent)]
    Model(#[from] lsrs_core::Error),
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

struct Writer {
    out: String,
}

impl Writer {
    fn line(&mut self, depth: usize, s: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn floats(&mut self, depth: usize, values: &[f64]) {
        for chunk in values.chunks(PER_LINE) {
            let words: Vec<String> = chunk.iter().map(|&v| hex(v)).collect();
            self.line(depth, &words.join(" "));
        }
    }

    fn layer(&mut self, depth: usize, layer: &Layer) {
        match layer {
            Layer::ChannelLift { from, to } => self.line(depth, &format!("channel_lift {from} {to}")),
            Layer::OrthoConv(l) | Layer::OrthoDense(l) => {
                let [o, i, h, w] = l.raw_weights().shape();
                self.line(depth, &format!("{} {o} {i} {h} {w}", layer.kind()));
                self.floats(depth + 1, l.raw_weights().data());
            }
            Layer::Conv(l) => {
                let [o, i, h, w] = l.weights().shape();
                self.line(depth, &format!("conv {o} {i} {h} {w}"));
                self.floats(depth + 1, l.weights().data());
            }
            Layer::GroupSort(g) => self.line(depth, &format!("groupsort {}", g.group_size())),
            Layer::Relu => self.line(depth, "relu"),
            Layer::Residual(r) => {
                self.line(depth, &format!("residual {} {}", hex(r.alpha_raw()), r.main().len()));
                for l in r.main() {
                    self.layer(depth + 1, l);
                }
            }
            Layer::Skip(s) => {
                self.line(depth, &format!("skip {}", s.main().len()));
                for l in s.main() {
                    self.layer(depth + 1, l);
                }
            }
            Layer::Dense(d) => {
                self.line(depth, &format!("dense {} {}", d.inputs(), d.outputs()));
                self.floats(depth + 1, d.weights());
                self.floats(depth + 1, d.bias());
            }
            Layer::Scale(c) => self.line(depth, &format!("scale {}", hex(*c))),
            Layer::Divide(c) => self.line(depth, &format!("divide {}", hex(*c))),
        }
    }
}

pub fn to_text(net: &SplitNetwork) -> String {
    let mut w = Writer { out: String::new() };
    w.line(0, &format!("{MAGIC} {VERSION}"));
    let [c, h, wd] = net.input_shape();
    w.line(0, &format!("input {c} {h} {wd}"));
    let (o, b) = net.for_fraction();
    w.line(0, &format!("for_fraction {o} {b}"));
    w.line(0, &format!("split {}", net.split_index()));
    w.line(0, &format!("layers {}", net.layers().len()));
    for l in net.layers() {
        w.layer(0, l);
    }
    w.line(0, "end");
    w.out
}

struct Reader<'a> {
    tokens: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> CheckpointError {
        CheckpointError::Parse { index: self.pos, msg: msg.into() }
    }

    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        let t = self.tokens.get(self.pos).copied().ok_or_else(|| self.err("unexpected end of checkpoint"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, word: &str) -> Result<(), CheckpointError> {
        let t = self.next()?;
        if t != word {
            self.pos -= 1;
            return Err(self.err(format!("expected `{word}`, found `{t}`")));
        }
        Ok(())
    }

    fn usize(&mut self) -> Result<usize, CheckpointError> {
        let t = self.next()?;
        t.parse().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected an unsigned integer, found `{t}`"))
        })
    }

    fn float(&mut self) -> Result<f64, CheckpointError> {
        let t = self.next()?;
        if t.len() != 16 {
            self.pos -= 1;
            return Err(self.err(format!("expected 16 hex digits, found `{t}`")));
        }
        u64::from_str_radix(t, 16).map(f64::from_bits).map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected 16 hex digits, found `{t}`"))
        })
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        (0..n).map(|_| self.float()).collect()
    }

    fn shape4(&mut self) -> Result<[usize; 4], CheckpointError> {
        Ok([self.usize()?, self.usize()?, self.usize()?, self.usize()?])
    }

    fn tensor(&mut self) -> Result<Tensor4, CheckpointError> {
        let shape = self.shape4()?;
        let data = self.floats(shape.iter().product())?;
        Ok(Tensor4::from_vec(shape, data)?)
    }

    fn layers(&mut self, n: usize) -> Result<Vec<Layer>, CheckpointError> {
        (0..n).map(|_| self.layer()).collect()
    }

    fn layer(&mut self) -> Result<Layer, CheckpointError> {
        let start = self.pos;
        let kind = self.next()?;
        let layer = match kind {
            "channel_lift" => Layer::ChannelLift { from: self.usize()?, to: self.usize()? },
            "ortho_conv" => Layer::OrthoConv(OrthoConv::new(self.tensor()?)?),
            "ortho_dense" => Layer::OrthoDense(OrthoConv::new(self.tensor()?)?),
            "conv" => Layer::Conv(CircularConv::new(self.tensor()?)?),
            "groupsort" => Layer::GroupSort(GroupSort::new(self.usize()?)?),
            "relu" => Layer::Relu,
            "residual" => {
                let alpha = self.float()?;
                let n = self.usize()?;
                Layer::Residual(ResidualBlock::new(self.layers(n)?, alpha)?)
            }
            "skip" => {
                let n = self.usize()?;
                Layer::Skip(SkipBlock::new(self.layers(n)?))
            }
            "dense" => {
                let (i, o) = (self.usize()?, self.usize()?);
                let w = self.floats(i * o)?;
                let b = self.floats(o)?;
                Layer::Dense(Dense::new(i, o, w, b)?)
            }
            "scale" => Layer::Scale(self.float()?),
            "divide" => Layer::Divide(self.float()?),
            other => {
                self.pos = start;
                return Err(self.err(format!("unknown layer `{other}`")));
            }
        };
        Ok(layer)
    }
}

pub fn from_text(text: &str) -> Result<SplitNetwork, CheckpointError> {
    let mut r = Reader { tokens: text.split_whitespace().collect(), pos: 0 };
    r.expect(MAGIC)?;
    let version = r.usize()? as u32;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    r.expect("input")?;
    let input = [r.usize()?, r.usize()?, r.usize()?];
    r.expect("for_fraction")?;
    let fraction = (r.usize()?, r.usize()?);
    r.expect("split")?;
    let split = r.usize()?;
    r.expect("layers")?;
    let n = r.usize()?;
    let layers = r.layers(n)?;
    r.expect("end")?;
    if r.pos != r.tokens.len() {
        return Err(r.err("trailing tokens after `end`"));
    }
    Ok(SplitNetwork::new(layers, split, input, fraction)?)
}

pub fn save(net: &SplitNetwork, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, to_text(net))
        .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn load(path: &Path) -> Result<SplitNetwork, CheckpointError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    from_text(&text)
}

/// Compact digest of the parameters, for logs.
pub fn fingerprint(net: &SplitNetwork) -> String {
    // FNV-1a over the checkpoint text.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in to_text(net).bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}
