use num_complex::Complex64 as C64;
use qstein::models::fermion::FermionSymbol;
use qstein::models::spin::{high_temp_condition, pauli_string};
use qstein::models::{fermion_model, iid_model, spin_gibbs_model, Caps, Interaction, ModelSequence};
use qstein::operator::{DensityMatrix, HermitianOperator};
use qstein::random::{random_commuting_pair, random_density};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, ModelConfig, TermConfig};
use crate::RunError;

/// A model plus whatever the stages need beyond the `ModelSequence` view.
pub struct Built {
    pub model: Box<dyn ModelSequence>,
    pub symbols: Option<(FermionSymbol, FermionSymbol, usize)>,
    pub summary: ModelSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelSummary {
    pub name: String,
    pub commuting: bool,
    /// Spin models with a `high_temp` table: `(lhs, lhs <= a)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high_temp: Option<HighTempSummary>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HighTempSummary {
    pub a: f64,
    pub delta: f64,
    pub lhs: f64,
    pub holds: bool,
}

fn density(re: &[Vec<f64>], im: Option<&Vec<Vec<f64>>>) -> qstein::Result<DensityMatrix> {
    let d = re.len();
    let op = HermitianOperator::from_fn(d, |i, j| C64::new(re[i][j], im.map_or(0.0, |m| m[i][j])))?;
    DensityMatrix::new(&op)
}

fn term(t: &TermConfig, local_dim: usize) -> qstein::Result<HermitianOperator> {
    match (&t.pauli, &t.matrix) {
        (Some(p), _) => pauli_string(p, t.coeff),
        (None, Some(rows)) => {
            let d = rows.len();
            let want = local_dim.pow(t.sites.len() as u32);
            if d != want {
                return Err(qstein::Error::Shape(format!("term matrix is {d}x{d}, sites need {want}")));
            }
            Ok(HermitianOperator::from_real_rows(rows)?.scale(t.coeff))
        }
        (None, None) => unreachable!("validated"),
    }
}

fn interaction(terms: &[TermConfig], local_dim: usize) -> qstein::Result<Interaction> {
    let mut out = Interaction::new(local_dim);
    for t in terms {
        out.add_term(&t.sites, term(t, local_dim)?)?;
    }
    Ok(out)
}

pub fn build(cfg: &ExperimentConfig) -> Result<Built, RunError> {
    let caps: Caps = cfg.caps.into();
    let at = |e| RunError::compute("model", e);
    match &cfg.model {
        ModelConfig::Iid { rho, rho_imag, sigma, sigma_imag, random } => {
            let (r, s) = match random {
                Some(spec) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    if spec.commuting {
                        random_commuting_pair(spec.dim, spec.floor, &mut rng).map_err(at)?
                    } else {
                        let r = random_density(spec.dim, spec.floor, &mut rng).map_err(at)?;
                        (r, random_density(spec.dim, spec.floor, &mut rng).map_err(at)?)
                    }
                }
                None => (
                    density(rho.as_ref().unwrap(), rho_imag.as_ref()).map_err(at)?,
                    density(sigma.as_ref().unwrap(), sigma_imag.as_ref()).map_err(at)?,
                ),
            };
            let model = iid_model(r, s, caps).map_err(at)?;
            let summary = ModelSummary { name: model.name(), commuting: model.commuting(), high_temp: None };
            Ok(Built { model: Box::new(model), symbols: None, summary })
        }
        ModelConfig::Spin { beta1, beta2, local_dim, phi, psi, high_temp } => {
            let phi = interaction(phi, *local_dim).map_err(at)?;
            let psi = interaction(psi, *local_dim).map_err(at)?;
            let high_temp = match high_temp {
                Some(h) => {
                    let (lhs, holds) = high_temp_condition(&phi, &psi, *beta1, *beta2, h.a, h.delta).map_err(at)?;
                    Some(HighTempSummary { a: h.a, delta: h.delta, lhs, holds })
                }
                None => None,
            };
            let model = spin_gibbs_model(phi, psi, *beta1, *beta2, 1, caps).map_err(at)?;
            let summary = ModelSummary { name: model.name(), commuting: model.commuting(), high_temp };
            Ok(Built { model: Box::new(model), symbols: None, summary })
        }
        ModelConfig::Fermion { d, q, r, delta, quad_points } => {
            let qs = q.build(*d, *delta).map_err(at)?;
            let rs = r.build(*d, *delta).map_err(at)?;
            let mut model = fermion_model(qs.clone(), rs.clone(), caps).map_err(at)?;
            if let Some(p) = quad_points {
                model = model.with_quad_points(*p);
            }
            let points = model.quad_points();
            let summary = ModelSummary { name: model.name(), commuting: model.commuting(), high_temp: None };
            Ok(Built { model: Box::new(model), symbols: Some((qs, rs, points)), summary })
        }
    }
}
