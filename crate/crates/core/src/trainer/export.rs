use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{KgModel, Split, TripleStore};
use crate::scalar::Real;

pub const ROUTING_HEADER: [&str; 5] = ["head", "relation", "alpha_e", "alpha_h", "alpha_s"];

const CHUNK: usize = 256;

/// One exported row: head name, relation name, `[α_E, α_H, α_S]`.
pub type RoutingRow = (String, String, [f64; 3]);

/// Per-geometry mean routing weight over the exported rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoutingSummary {
    pub rows: usize,
    pub mean: [f64; 3],
}

/// Writes eval-mode routing weights for every triple of `split` as
/// TAB-separated rows under [`ROUTING_HEADER`], followed by `#` comment
/// lines holding the row count and per-geometry means.
pub fn export_routing<T: Real>(
    model: &KgModel<T>,
    store: &TripleStore,
    split: Split,
    out: &Path,
) -> Result<RoutingSummary> {
    if !model.variant().is_routed() {
        return Err(Error::UnsupportedVariant(format!(
            "routing export needs the cat variant, model is '{}'",
            model.variant()
        )));
    }
    let triples = store.split(split);
    if triples.is_empty() {
        return Err(Error::InvalidConfig(format!("split '{split}' is empty")));
    }
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(out, e);
    writeln!(w, "{}", ROUTING_HEADER.join("\t")).map_err(io)?;
    let mut sum = [0.0f64; 3];
    for chunk in triples.chunks(CHUNK) {
        let pairs: Vec<(usize, usize)> = chunk.iter().map(|t| (t.head, t.relation)).collect();
        let alphas = model.routing_weights(&pairs)?;
        for (t, a) in chunk.iter().zip(alphas) {
            let a = a.map(|x| x.as_f64());
            sum.iter_mut().zip(a).for_each(|(s, x)| *s += x);
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                store.entity_name(t.head).unwrap_or_default(),
                store.relation_name(t.relation).unwrap_or_default(),
                a[0],
                a[1],
                a[2]
            )
            .map_err(io)?;
        }
    }
    let n = triples.len();
    let mean = sum.map(|s| s / n as f64);
    writeln!(w, "# rows\t{n}").map_err(io)?;
    writeln!(w, "# mean\t{}\t{}\t{}", mean[0], mean[1], mean[2]).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(RoutingSummary { rows: n, mean })
}

/// Parses a routing export back into its rows and the summary recorded in
/// its trailing comment lines.
pub fn read_routing_export(path: &Path) -> Result<(Vec<RoutingRow>, RoutingSummary)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut count = None;
    let mut mean = None;
    for (no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: no + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let num = |s: &str| s.parse::<f64>().map_err(|e| perr(format!("'{s}': {e}")));
        if no == 0 {
            if fields != ROUTING_HEADER {
                return Err(perr(format!("unexpected header '{line}'")));
            }
            continue;
        }
        match fields.as_slice() {
            ["# rows", n] => count = Some(n.parse::<usize>().map_err(|e| perr(e.to_string()))?),
            ["# mean", e, h, s] => mean = Some([num(e)?, num(h)?, num(s)?]),
            [h, r, e, hy, s] => rows.push((h.to_string(), r.to_string(), [num(e)?, num(hy)?, num(s)?])),
            _ => return Err(perr(format!("malformed line '{line}'"))),
        }
    }
    let (Some(rows_n), Some(mean)) = (count, mean) else {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "missing summary lines".into(),
        });
    };
    Ok((rows, RoutingSummary { rows: rows_n, mean }))
}
