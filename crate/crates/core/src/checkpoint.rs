//! Model checkpoint files: magic "REPCAP\x01", a JSON header describing the
//! stack, then little-endian f64 weight blobs in layer order. Student files
//! append the (mu_g, l_g) population blob.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, MlpNetwork, LEAKY_SLOPE};
use crate::student::{StudentArchitecture, StudentNetwork};

pub const MAGIC: &[u8; 7] = b"REPCAP\x01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointRole {
    Projector,
    Student,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerHeader {
    in_dim: usize,
    out_dim: usize,
    activation: String, // "identity" | "leaky"
    residual: bool,
    dropout: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    role: CheckpointRole,
    layer_sizes: Vec<usize>,
    dropout_rates: Vec<f64>,
    seed: u64,
    activation_slope: f64,
    layers: Vec<LayerHeader>,
    /// Student only: the two head layers (mu, logvar) and population dim.
    heads: Vec<LayerHeader>,
    population_dim: usize,
}

fn layer_header(layer: &Layer) -> LayerHeader {
    LayerHeader {
        in_dim: layer.in_dim,
        out_dim: layer.out_dim,
        activation: match layer.activation {
            Activation::Identity => "identity".into(),
            Activation::LeakyRelu(_) => "leaky".into(),
        },
        residual: layer.residual,
        dropout: layer.dropout,
    }
}

fn rebuild_layer(h: &LayerHeader, slope: f64) -> Result<Layer> {
    let activation = match h.activation.as_str() {
        "identity" => Activation::Identity,
        "leaky" => Activation::LeakyRelu(slope),
        other => return Err(Error::Format(format!("unknown activation '{other}'"))),
    };
    Ok(Layer::new(
        h.in_dim, h.out_dim, activation, h.residual, h.dropout,
    ))
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("checkpoint truncated in weight blob".into()))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_checkpoint<W: Write>(w: &mut W, header: &Header, blobs: &[f64]) -> Result<()> {
    w.write_all(MAGIC)?;
    let json = serde_json::to_vec(header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    write_f64s(w, blobs)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for checkpoint magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let mut len_buf = [0u8; 8];
    r.read_exact(&mut len_buf)
        .map_err(|_| Error::Format("missing header length".into()))?;
    let len = u64::from_le_bytes(len_buf) as usize;
    if len > 16 * 1024 * 1024 {
        return Err(Error::Format("unreasonable header length".into()));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| Error::Format("checkpoint truncated in header".into()))?;
    serde_json::from_slice(&json).map_err(|e| Error::Format(format!("bad header: {e}")))
}

/// Role of a checkpoint without loading the weights.
pub fn peek_role(path: &Path) -> Result<CheckpointRole> {
    let mut f = std::fs::File::open(path)?;
    Ok(read_header(&mut f)?.role)
}

pub fn save_projector(net: &MlpNetwork, path: &Path) -> Result<()> {
    let header = Header {
        role: CheckpointRole::Projector,
        layer_sizes: net.layer_sizes(),
        dropout_rates: net.dropout_rates(),
        seed: net.seed,
        activation_slope: LEAKY_SLOPE,
        layers: net.layers().iter().map(layer_header).collect(),
        heads: Vec::new(),
        population_dim: 0,
    };
    let mut blobs = Vec::new();
    net.copy_params_to(&mut blobs);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut f, &header, &blobs)
}

pub fn load_projector(path: &Path) -> Result<MlpNetwork> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let header = read_header(&mut f)?;
    if header.role != CheckpointRole::Projector {
        return Err(Error::Format("expected a projector checkpoint".into()));
    }
    let layers = header
        .layers
        .iter()
        .map(|h| rebuild_layer(h, header.activation_slope))
        .collect::<Result<Vec<_>>>()?;
    let mut net = MlpNetwork::new(layers, header.seed);
    let params = read_f64s(&mut f, net.param_count())?;
    net.load_params_from(&params);
    Ok(net)
}

pub fn save_student(net: &StudentNetwork, mu_g: &[f64], l_g: &[f64], path: &Path) -> Result<()> {
    if mu_g.len() != net.output_dim() || l_g.len() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.output_dim(),
            got: mu_g.len(),
        });
    }
    let header = Header {
        role: CheckpointRole::Student,
        layer_sizes: net.trunk.layer_sizes(),
        dropout_rates: net.trunk.dropout_rates(),
        seed: net.trunk.seed,
        activation_slope: LEAKY_SLOPE,
        layers: net.trunk.layers().iter().map(layer_header).collect(),
        heads: vec![
            layer_header(&net.mu_head.layers()[0]),
            layer_header(&net.logvar_head.layers()[0]),
        ],
        population_dim: net.output_dim(),
    };
    let mut blobs = Vec::new();
    net.copy_params_to(&mut blobs);
    blobs.extend_from_slice(mu_g);
    blobs.extend_from_slice(l_g);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut f, &header, &blobs)
}

pub fn load_student(path: &Path) -> Result<(StudentNetwork, Vec<f64>, Vec<f64>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let header = read_header(&mut f)?;
    if header.role != CheckpointRole::Student {
        return Err(Error::Format("expected a student checkpoint".into()));
    }
    if header.heads.len() != 2 {
        return Err(Error::Format("student checkpoint needs two heads".into()));
    }
    let trunk_layers = header
        .layers
        .iter()
        .map(|h| rebuild_layer(h, header.activation_slope))
        .collect::<Result<Vec<_>>>()?;
    let trunk = MlpNetwork::new(trunk_layers, header.seed);
    let width = trunk.output_dim();
    let m = header.population_dim;
    for h in &header.heads {
        if h.in_dim != width || h.out_dim != m {
            return Err(Error::Format(
                "head dimensions inconsistent with trunk".into(),
            ));
        }
    }
    // Shell with the right shapes; every parameter is overwritten below.
    let mut net = StudentNetwork::new(
        trunk.input_dim(),
        m,
        StudentArchitecture {
            width,
            residual_blocks: trunk.layers().len().saturating_sub(1),
            dropout: header.dropout_rates.first().copied().unwrap_or(0.0),
        },
        header.seed,
    );
    net.trunk = trunk;
    let params = read_f64s(&mut f, net.param_count())?;
    net.load_params_from(&params);
    let mu_g = read_f64s(&mut f, m)?;
    let l_g = read_f64s(&mut f, m)?;
    Ok((net, mu_g, l_g))
}
