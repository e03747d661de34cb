//! Line-oriented text form of a network spec:
//!
//! ```text
//! network frontnet
//! input 1x96x160
//! layer conv2d stem.conv kernel=5x5 stride=2x2 padding=2x2 in=1 out=32
//! layer add b1.add kernel=1x1 stride=1x1 padding=0x0 in=32 out=32 skip=7
//! ```

use std::fmt::Write;

use nanoloc_core::arch::{LayerKind, LayerSpec, NetworkSpec, Shape};

/// A parse failure at a 1-based line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextError {
    pub line: usize,
    pub reason: String,
}

pub fn to_text(spec: &NetworkSpec) -> String {
    let mut s = String::new();
    let i = spec.input;
    writeln!(s, "network {}", spec.name).unwrap();
    writeln!(s, "input {}x{}x{}", i.channels, i.height, i.width).unwrap();
    for l in &spec.layers {
        write!(
            s,
            "layer {} {} kernel={}x{} stride={}x{} padding={}x{} in={} out={}",
            l.kind,
            l.name,
            l.kernel.0,
            l.kernel.1,
            l.stride.0,
            l.stride.1,
            l.padding.0,
            l.padding.1,
            l.in_channels,
            l.out_channels
        )
        .unwrap();
        if let Some(k) = l.skip {
            write!(s, " skip={k}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn pair(v: &str) -> Option<(usize, usize)> {
    let (a, b) = v.split_once('x')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

fn shape(v: &str) -> Option<Shape> {
    let mut it = v.split('x').map(|p| p.parse::<usize>().ok());
    let s = Shape::new(it.next()??, it.next()??, it.next()??);
    it.next().is_none().then_some(s)
}

fn parse_layer(words: &[&str]) -> Result<LayerSpec, String> {
    let [kind, name, fields @ ..] = words else {
        return Err("expected `layer <kind> <name> key=value...`".into());
    };
    let kind = LayerKind::parse(kind).ok_or_else(|| format!("unknown layer kind `{kind}`"))?;
    let mut layer = LayerSpec::relu(name, 0);
    layer.kind = kind;
    let (mut got_in, mut got_out) = (false, false);
    for f in fields {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, found `{f}`"))?;
        let bad = || format!("bad value `{v}` for `{k}`");
        match k {
            "kernel" => layer.kernel = pair(v).ok_or_else(bad)?,
            "stride" => layer.stride = pair(v).ok_or_else(bad)?,
            "padding" => layer.padding = pair(v).ok_or_else(bad)?,
            "in" => {
                layer.in_channels = v.parse().map_err(|_| bad())?;
                got_in = true;
            }
            "out" => {
                layer.out_channels = v.parse().map_err(|_| bad())?;
                got_out = true;
            }
            "skip" => layer.skip = Some(v.parse().map_err(|_| bad())?),
            _ => return Err(format!("unknown key `{k}`")),
        }
    }
    if !(got_in && got_out) {
        return Err("`in` and `out` are required".into());
    }
    Ok(layer)
}

/// Parses and validates a spec; `#` starts a comment.
pub fn from_text(text: &str) -> Result<NetworkSpec, TextError> {
    let (mut name, mut input, mut layers) = (None, None, Vec::new());
    let err = |line: usize, reason: String| TextError { line, reason };
    let mut last = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        last = line;
        let words: Vec<&str> = content.split_whitespace().collect();
        match words[0] {
            "network" if words.len() == 2 && name.is_none() => name = Some(words[1].to_string()),
            "input" if words.len() == 2 && input.is_none() => {
                input = Some(
                    shape(words[1])
                        .ok_or_else(|| err(line, format!("bad shape `{}`", words[1])))?,
                )
            }
            "layer" => layers.push(parse_layer(&words[1..]).map_err(|r| err(line, r))?),
            w => return Err(err(line, format!("unexpected `{w}`"))),
        }
    }
    let name = name.ok_or_else(|| err(1, "missing `network` line".into()))?;
    let input = input.ok_or_else(|| err(1, "missing `input` line".into()))?;
    let spec = NetworkSpec::new(name, input, layers);
    spec.shapes().map_err(|e| err(last.max(1), e.to_string()))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nanoloc_core::arch::all_networks;

    #[test]
    fn round_trips_every_network() {
        for net in all_networks() {
            let text = to_text(&net);
            assert_eq!(from_text(&text).unwrap(), net);
        }
    }

    #[test]
    fn errors_carry_lines() {
        let e = from_text("network a\ninput 1x4x4\nlayer conv2d c kernel=3x3 in=1\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = from_text("network a\ninput 1x4x4\nlayer bogus c in=1 out=1\n").unwrap_err();
        assert!(e.reason.contains("bogus"));
    }
}
