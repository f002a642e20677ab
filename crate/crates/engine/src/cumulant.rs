use nalgebra::DMatrix;

use cola_core::{Error, Result};

/// Cumulative sensitivity and variability sums relayed between sites, with
/// sample-count provenance.
///
/// `h_cum = Σ_j H_j` and (when present) `v_cum = Σ_j V_j` over the absorbed
/// sites; `n_cum` is the corresponding subject count. Propensity-only relay
/// rounds carry `p_γ×p_γ` matrices and no variability sum; full rounds carry
/// `p×p` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantPair {
    pub h_cum: DMatrix<f64>,
    pub v_cum: Option<DMatrix<f64>>,
    pub n_cum: usize,
    pub sites_absorbed: Vec<String>,
}

impl CumulantPair {
    /// Fresh zero cumulants of the given dimension.
    pub fn zeros(dim: usize, with_variability: bool) -> Self {
        Self {
            h_cum: DMatrix::zeros(dim, dim),
            v_cum: with_variability.then(|| DMatrix::zeros(dim, dim)),
            n_cum: 0,
            sites_absorbed: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.h_cum.nrows()
    }

    /// Folds one site's contribution into the running sums.
    pub fn absorb(
        &mut self,
        h_site: &DMatrix<f64>,
        v_site: Option<&DMatrix<f64>>,
        n_site: usize,
        site_id: &str,
    ) -> Result<()> {
        if h_site.nrows() != self.dim() || h_site.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "CumulantPair::absorb H",
                expected: self.dim(),
                actual: h_site.nrows(),
            });
        }
        self.h_cum += h_site;
        match (&mut self.v_cum, v_site) {
            (Some(v_cum), Some(v)) => {
                if v.nrows() != v_cum.nrows() || v.ncols() != v_cum.ncols() {
                    return Err(Error::DimensionMismatch {
                        context: "CumulantPair::absorb V",
                        expected: v_cum.nrows(),
                        actual: v.nrows(),
                    });
                }
                *v_cum += v;
            }
            (None, None) => {}
            _ => {
                return Err(Error::Unsupported(
                    "variability contribution does not match cumulant shape".into(),
                ))
            }
        }
        self.n_cum += n_site;
        self.sites_absorbed.push(site_id.to_string());
        Ok(())
    }
}
