use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ContactNetwork;
use crate::error::{Error, Result};

/// JSON sidecar stored next to an edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub node_count: usize,
    pub edge_count: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    pub mean_degree: f64,
    pub clustering: f64,
}

impl NetworkMeta {
    pub fn of(net: &ContactNetwork, seed: Option<u64>) -> Self {
        let s = net.stats();
        NetworkMeta {
            node_count: s.node_count,
            edge_count: s.edge_count,
            seed,
            mean_degree: s.mean_degree,
            clustering: s.clustering,
        }
    }
}

/// One `u v` line per undirected edge, `u < v`, ascending.
pub fn write_edge_list<W: Write>(net: &ContactNetwork, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for (u, v) in net.edges() {
        writeln!(out, "{u} {v}")?;
    }
    out.flush()
}

pub fn sidecar_path(edge_list: &Path) -> PathBuf {
    let mut name = edge_list.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes `path` and its `path.json` sidecar.
pub fn write_network_files(net: &ContactNetwork, path: &Path, seed: Option<u64>) -> Result<NetworkMeta> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_edge_list(net, file).map_err(|e| Error::io(path, e))?;
    let meta = NetworkMeta::of(net, seed);
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))?;
    Ok(meta)
}

/// Reads an edge list. The node count comes from the sidecar when present,
/// otherwise from the largest id seen.
pub fn load_edge_list(path: &Path) -> Result<ContactNetwork> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let shown = path.display().to_string();
    let mut edges = Vec::new();
    let mut max_id = 0u32;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u32> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
                path: shown.clone(),
                line: k + 1,
                msg: format!("expected `u v`, got {line:?}"),
            })
        };
        let u = parse(it.next())?;
        let v = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::Parse {
                path: shown,
                line: k + 1,
                msg: "trailing tokens".into(),
            });
        }
        max_id = max_id.max(u).max(v);
        edges.push((u, v));
    }
    let side = sidecar_path(path);
    let node_count = if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: NetworkMeta = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", side.display())))?;
        meta.node_count
    } else if edges.is_empty() {
        return Err(Error::invalid(format!("{shown}: empty edge list and no sidecar")));
    } else {
        max_id as usize + 1
    };
    ContactNetwork::from_edges(node_count, &edges)
}
