//! The relay wire format: one canonical JSON object per message.
//!
//! A [`RelayPacket`] is the only value that crosses a site boundary. Floats
//! are serialized as the shortest decimal that round-trips the exact binary64
//! value, so a parse of the emitted text reproduces the same bits. Field
//! presence depends on `(protocol, round)`:
//!
//! | protocol, round        | carries                                          |
//! |------------------------|--------------------------------------------------|
//! | 2R/3R, round 1         | `theta.gamma`, `p_γ`-dim `H_cum`                  |
//! | 3R, round 2            | `gamma_global`, `theta.beta`, 2-dim `H_cum`       |
//! | 3R round 3, 2R round 2 | globals, full `p`-dim `H_cum` and `V_cum`         |
//! | 2R-INF, round 1        | full `theta`, `p`-dim `H_cum`, no `V_cum`         |
//! | 2R-INF, round 2        | globals, full `p`-dim `H_cum` and `V_cum`         |
//! | 1R (single round)      | full `theta`, `p`-dim `H_cum` and `V_cum`         |
//!
//! `theta.gamma` is always an array; it is empty in rounds that do not relay
//! the γ block. `site_index` counts hops completed within the current round,
//! while `site_trail` records every hop of the whole relay in order.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use cola_core::{Error, Result};

use crate::cumulant::CumulantPair;
use crate::protocol::ProtocolKind;

pub const SCHEMA_VERSION: u32 = 1;

/// Square matrix in row-major order; `dim == rows == cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPayload {
    pub dim: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixPayload {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        Self {
            dim: rows,
            rows,
            cols,
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.rows != self.dim
            || self.cols != self.dim
            || self.data.len() != self.rows * self.cols
        {
            return Err(Error::DimensionMismatch {
                context: "MatrixPayload shape",
                expected: self.dim * self.dim,
                actual: self.data.len(),
            });
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Coefficient blocks in transit. `gamma` is empty when the γ block is not
/// being relayed; `beta` is `null` when the β block is not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPayload {
    pub gamma: Vec<f64>,
    pub beta: Option<[f64; 2]>,
}

impl ThetaPayload {
    pub fn gamma_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.gamma.clone())
    }

    pub fn beta_vector(&self) -> Option<Vector2<f64>> {
        self.beta.map(|b| Vector2::new(b[0], b[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayPacket {
    pub schema_version: u32,
    pub protocol: ProtocolKind,
    pub round: u32,
    pub site_index: u32,
    pub site_trail: Vec<String>,
    pub n_cum: usize,
    pub theta: ThetaPayload,
    pub gamma_global: Option<Vec<f64>>,
    pub beta_global: Option<[f64; 2]>,
    #[serde(rename = "H_cum")]
    pub h_cum: MatrixPayload,
    #[serde(rename = "V_cum")]
    pub v_cum: Option<MatrixPayload>,
    pub converged_so_far: bool,
}

impl RelayPacket {
    /// The carried cumulants as matrices.
    pub fn cumulants(&self) -> Result<CumulantPair> {
        Ok(CumulantPair {
            h_cum: self.h_cum.to_matrix()?,
            v_cum: match &self.v_cum {
                Some(v) => Some(v.to_matrix()?),
                None => None,
            },
            n_cum: self.n_cum,
            sites_absorbed: self.site_trail.clone(),
        })
    }

    pub fn gamma_global_vector(&self) -> Option<DVector<f64>> {
        self.gamma_global
            .as_ref()
            .map(|g| DVector::from_vec(g.clone()))
    }

    pub fn beta_global_vector(&self) -> Option<Vector2<f64>> {
        self.beta_global.map(|b| Vector2::new(b[0], b[1]))
    }

    fn all_floats(&self) -> impl Iterator<Item = f64> + '_ {
        self.theta
            .gamma
            .iter()
            .copied()
            .chain(self.theta.beta.into_iter().flatten())
            .chain(self.gamma_global.iter().flatten().copied())
            .chain(self.beta_global.into_iter().flatten())
            .chain(self.h_cum.data.iter().copied())
            .chain(self.v_cum.iter().flat_map(|m| m.data.iter().copied()))
    }

    /// Serializes to canonical JSON. Non-finite values are rejected: they
    /// have no JSON representation and must never cross a site boundary.
    pub fn to_json_string(&self) -> Result<String> {
        if self.all_floats().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "RelayPacket serialization",
            });
        }
        serde_json::to_string(self).map_err(|e| Error::Unsupported(format!("packet encode: {e}")))
    }

    /// Parses and structurally validates a packet.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let packet: RelayPacket = serde_json::from_str(text)
            .map_err(|e| Error::Unsupported(format!("packet decode: {e}")))?;
        packet.validate()?;
        Ok(packet)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Unsupported(format!(
                "unsupported packet schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.h_cum.to_matrix()?;
        if let Some(v) = &self.v_cum {
            v.to_matrix()?;
        }
        if self.round == 0 || self.round > self.protocol.rounds() {
            return Err(Error::Unsupported(format!(
                "round {} out of range for protocol {}",
                self.round,
                self.protocol.wire_name()
            )));
        }
        Ok(())
    }
}
