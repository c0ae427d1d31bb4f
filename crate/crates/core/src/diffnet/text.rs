//! Plain-text network format.
//!
//! ```text
//! art-network 1
//! layer 2x2 relu
//! 1 0.5
//! 1 -1
//! 0 0
//! layer 2x2 linear
//! 1 -1
//! 0.5 1
//! 0 0
//! ```
//!
//! Each block starts with `layer <out>x<in> relu|linear`, followed by `out`
//! rows of `in` weights and one bias row. Blank lines and `#` comments are
//! ignored. Values are written with the shortest representation that parses
//! back to the same `f64`.

use std::fmt::Write as _;

use crate::error::{ArtError, Result};

use super::network::{LayerSpec, Network};

pub const NETWORK_HEADER: &str = "art-network 1";

pub fn write_network(net: &Network) -> String {
    let mut out = String::new();
    out.push_str(NETWORK_HEADER);
    out.push('\n');
    for layer in net.layers() {
        let act = if layer.apply_relu() { "relu" } else { "linear" };
        let _ = writeln!(out, "layer {}x{} {}", layer.out_dim(), layer.in_dim(), act);
        for j in 0..layer.out_dim() {
            push_row(&mut out, layer.row(j));
        }
        push_row(&mut out, layer.bias());
    }
    out
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn parse_err(line: usize, message: impl Into<String>) -> ArtError {
    ArtError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_network(text: &str) -> Result<Network> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        Some((_, h)) if h == NETWORK_HEADER => {}
        Some((n, h)) => {
            return Err(parse_err(
                n,
                format!("expected header `{NETWORK_HEADER}`, found `{h}`"),
            ))
        }
        None => return Err(parse_err(1, "empty network file")),
    }

    let mut layers = Vec::new();
    while let Some((n, line)) = lines.next() {
        let (out_dim, in_dim, relu) = parse_layer_line(n, line)?;
        let mut read_row = |expect: usize, what: &str| -> Result<Vec<f64>> {
            let (rn, row) = lines
                .next()
                .ok_or_else(|| parse_err(n, format!("layer ends before its {what}")))?;
            let vals = row
                .split_whitespace()
                .enumerate()
                .map(|(col, tok)| {
                    tok.parse::<f64>().map_err(|_| {
                        parse_err(rn, format!("column {}: `{tok}` is not a number", col + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != expect {
                return Err(parse_err(
                    rn,
                    format!("{what} has {} values, expected {expect}", vals.len()),
                ));
            }
            Ok(vals)
        };
        let mut weights = Vec::with_capacity(out_dim * in_dim);
        for _ in 0..out_dim {
            weights.extend(read_row(in_dim, "weight row")?);
        }
        let bias = read_row(out_dim, "bias row")?;
        let layer = LayerSpec::new(out_dim, in_dim, weights, bias, relu)
            .map_err(|e| parse_err(n, e.to_string()))?;
        layers.push(layer);
    }
    Network::new(layers)
}

fn parse_layer_line(n: usize, line: &str) -> Result<(usize, usize, bool)> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let [kw, shape, act] = toks[..] else {
        return Err(parse_err(
            n,
            format!("expected `layer <out>x<in> relu|linear`, found `{line}`"),
        ));
    };
    if kw != "layer" {
        return Err(parse_err(n, format!("expected `layer`, found `{kw}`")));
    }
    let (o, i) = shape
        .split_once('x')
        .ok_or_else(|| parse_err(n, format!("bad layer shape `{shape}`")))?;
    let dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(n, format!("bad layer shape `{shape}`")))
    };
    let relu = match act {
        "relu" => true,
        "linear" => false,
        other => return Err(parse_err(n, format!("unknown activation `{other}`"))),
    };
    Ok((dim(o)?, dim(i)?, relu))
}
