//! On-disk graph formats.
//!
//! A graph directory holds `edges.tsv` ("u<TAB>v" per line), `features.bin`
//! (or `features.csv`), optional `labels.tsv` ("node<TAB>class") and, for
//! generated graphs, `noisy_edges.tsv` with the planted noise used by
//! post-hoc metrics only.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{DrtrError, Result};
use crate::graph::GraphStore;

pub const FEATURE_MAGIC: &[u8; 8] = b"DRTRFMAT";

fn malformed(path: &str, line: usize, msg: impl std::fmt::Display) -> DrtrError {
    DrtrError::MalformedInput(format!("{path}:{line}: {msg}"))
}

fn parse_index(tok: &str, path: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| malformed(path, line, format!("expected a non-negative integer, got {tok:?}")))
}

fn pairs<R: BufRead>(input: R, path: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split('\t');
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(malformed(path, i + 1, "expected two tab-separated fields"));
        };
        out.push((parse_index(a.trim(), path, i + 1)?, parse_index(b.trim(), path, i + 1)?));
    }
    Ok(out)
}

pub fn read_edges<R: BufRead>(input: R) -> Result<Vec<(usize, usize)>> {
    pairs(input, "edges")
}

pub fn write_edges<W: Write>(edges: &[(usize, usize)], mut out: W) -> Result<()> {
    for (a, b) in edges {
        writeln!(out, "{a}\t{b}")?;
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(input: R) -> Result<BTreeMap<usize, usize>> {
    let mut map = BTreeMap::new();
    for (node, class) in pairs(input, "labels")? {
        if map.insert(node, class).is_some_and(|prev| prev != class) {
            return Err(DrtrError::MalformedInput(format!("node {node} has conflicting labels")));
        }
    }
    Ok(map)
}

pub fn write_labels<W: Write>(labels: &[Option<usize>], mut out: W) -> Result<()> {
    for (v, c) in labels.iter().enumerate() {
        if let Some(c) = c {
            writeln!(out, "{v}\t{c}")?;
        }
    }
    Ok(())
}

/// Binary feature matrix: magic, `u32` rows, `u32` cols, then row-major
/// little-endian `f32` values.
pub fn write_features<W: Write>(features: &Array2<f64>, mut out: W) -> Result<()> {
    let (rows, cols) = features.dim();
    let rows32 = u32::try_from(rows).map_err(|_| DrtrError::InvalidArgument("too many rows".into()))?;
    let cols32 = u32::try_from(cols).map_err(|_| DrtrError::InvalidArgument("too many columns".into()))?;
    out.write_all(FEATURE_MAGIC)?;
    out.write_all(&rows32.to_le_bytes())?;
    out.write_all(&cols32.to_le_bytes())?;
    for &x in features.iter() {
        out.write_all(&(x as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_features<R: Read>(mut input: R) -> Result<Array2<f64>> {
    let mut header = [0u8; 16];
    input
        .read_exact(&mut header)
        .map_err(|_| DrtrError::MalformedInput("feature file shorter than its header".into()))?;
    if &header[..8] != FEATURE_MAGIC {
        return Err(DrtrError::MalformedInput("bad feature file magic".into()));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| DrtrError::MalformedInput("feature header overflows".into()))?;
    if body.len() != expected {
        return Err(DrtrError::MalformedInput(format!(
            "feature body has {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

/// Comma-separated rows of reals, one node per line.
pub fn read_features_csv<R: BufRead>(input: R) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| malformed("features", i + 1, format!("bad number {t:?}")))
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(malformed("features", i + 1, format!("expected {c} columns, got {}", row.len())))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, cols.unwrap_or(0)), values).expect("rows checked"))
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| DrtrError::MalformedInput(format!("{}: {e}", path.display())))
}

/// Load a graph directory.
pub fn load_graph_dir(dir: &Path) -> Result<GraphStore> {
    let edges = read_edges(open(&dir.join("edges.tsv"))?)?;
    let bin = dir.join("features.bin");
    let features = if bin.exists() {
        read_features(open(&bin)?)?
    } else {
        read_features_csv(open(&dir.join("features.csv"))?)?
    };
    let labels_path = dir.join("labels.tsv");
    let labels = if labels_path.exists() {
        read_labels(open(&labels_path)?)?
    } else {
        BTreeMap::new()
    };
    GraphStore::build(&edges, features, &labels)
}

/// Planted noisy edges of a generated graph directory; empty when absent.
pub fn load_noisy_edges(dir: &Path) -> Result<Vec<(usize, usize)>> {
    let path = dir.join("noisy_edges.tsv");
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_edges(open(&path)?)
}

pub fn save_graph_dir(g: &GraphStore, noisy: Option<&[(usize, usize)]>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut e = BufWriter::new(fs::File::create(dir.join("edges.tsv"))?);
    write_edges(&g.edge_list(), &mut e)?;
    e.flush()?;
    let mut f = BufWriter::new(fs::File::create(dir.join("features.bin"))?);
    write_features(g.features(), &mut f)?;
    f.flush()?;
    let mut l = BufWriter::new(fs::File::create(dir.join("labels.tsv"))?);
    write_labels(g.labels(), &mut l)?;
    l.flush()?;
    if let Some(noisy) = noisy {
        let mut n = BufWriter::new(fs::File::create(dir.join("noisy_edges.tsv"))?);
        write_edges(noisy, &mut n)?;
        n.flush()?;
    }
    Ok(())
}

/// Load the citation-graph layout: `<prefix>.content` lines of
/// `paper_id <features...> class_name`, and `<prefix>.cites` lines of
/// `cited_id citing_id`. Papers are indexed in file order, class names in
/// order of first appearance; citations to unknown papers are skipped.
pub fn load_citation_graph(content: &Path, cites: &Path) -> Result<GraphStore> {
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut classes: Vec<String> = Vec::new();
    let mut labels = BTreeMap::new();
    let mut values = Vec::new();
    let mut cols = None;
    let path = content.display().to_string();
    for (i, line) in open(content)?.lines().enumerate() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 3 {
            return Err(malformed(&path, i + 1, "expected id, features and class"));
        }
        let feats = &toks[1..toks.len() - 1];
        match cols {
            None => cols = Some(feats.len()),
            Some(c) if c != feats.len() => return Err(malformed(&path, i + 1, "inconsistent feature count")),
            _ => {}
        }
        for t in feats {
            values.push(t.parse::<f64>().map_err(|_| malformed(&path, i + 1, format!("bad feature {t:?}")))?);
        }
        let node = ids.len();
        if ids.insert(toks[0].to_string(), node).is_some() {
            return Err(malformed(&path, i + 1, format!("duplicate id {}", toks[0])));
        }
        let class_name = toks[toks.len() - 1];
        let class = match classes.iter().position(|c| c == class_name) {
            Some(c) => c,
            None => {
                classes.push(class_name.to_string());
                classes.len() - 1
            }
        };
        labels.insert(node, class);
    }
    let features = Array2::from_shape_vec((ids.len(), cols.unwrap_or(0)), values).expect("rows checked");
    let mut edges = Vec::new();
    let mut skipped = 0usize;
    for line in open(cites)?.lines() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            continue;
        }
        match (ids.get(toks[0]), ids.get(toks[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::debug!("skipped {skipped} citations with unknown endpoints");
    }
    GraphStore::build(&edges, features, &labels)
}
