//! Regressor statistics required by the mean and mean-square models.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::seed::SeedPath;
use crate::signals::NodeSignalProfile;

/// Default number of regressor draws per node.
pub const DEFAULT_MOMENT_SAMPLES: usize = 200_000;

/// Moments of one node's regressor `u` (length `L`).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMoments {
    /// `E{u uᵀ / ‖u‖²}`.
    pub ea: DMatrix<f64>,
    /// `E{A ⊗ A}` with `A = u uᵀ / ‖u‖²`, an `L² × L²` Kronecker-layout matrix.
    pub ea_kron: DMatrix<f64>,
    /// `E{u uᵀ / ‖u‖⁴}`.
    pub eb: DMatrix<f64>,
    /// `E{u uᵀ}`, taken from the exact AR(1) covariance.
    pub r: DMatrix<f64>,
    /// `E{1 / ‖u‖²}`.
    pub inv_energy: f64,
}

impl NodeMoments {
    /// Assemble moments computed elsewhere.
    pub fn from_parts(
        ea: DMatrix<f64>,
        ea_kron: DMatrix<f64>,
        eb: DMatrix<f64>,
        r: DMatrix<f64>,
        inv_energy: f64,
    ) -> Result<Self> {
        let l = ea.nrows();
        let square = |m: &DMatrix<f64>, n: usize| m.nrows() == n && m.ncols() == n;
        if !square(&ea, l) || !square(&eb, l) || !square(&r, l) || !square(&ea_kron, l * l) {
            return Err(invalid("inconsistent regressor moment dimensions"));
        }
        Ok(NodeMoments {
            ea,
            ea_kron,
            eb,
            r,
            inv_energy,
        })
    }

    pub fn length(&self) -> usize {
        self.ea.nrows()
    }

    /// `E{A W A}` for a symmetric `L × L` matrix `W`.
    pub fn fourth_moment_apply(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.length();
        let v = &self.ea_kron * DMatrix::from_column_slice(l * l, 1, w.as_slice());
        DMatrix::from_column_slice(l, l, v.as_slice())
    }
}

/// Per-node regressor moments of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorMoments {
    pub nodes: Vec<NodeMoments>,
}

impl RegressorMoments {
    pub fn new(nodes: Vec<NodeMoments>) -> Result<Self> {
        let l = nodes
            .first()
            .ok_or_else(|| invalid("moments need at least one node"))?
            .length();
        if nodes.iter().any(|n| n.length() != l) {
            return Err(invalid("all nodes must share the regressor length"));
        }
        Ok(RegressorMoments { nodes })
    }

    pub fn length(&self) -> usize {
        self.nodes[0].length()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Block-diagonal `E{A}` of the whole network.
    pub fn global_ea(&self) -> DMatrix<f64> {
        block_diag(self.nodes.iter().map(|n| &n.ea))
    }

    /// The `N²L² × N²L²` matrix `E{A ⊗ A}` for the block-diagonal network
    /// regressor matrix. Only meant for small networks.
    pub fn global_kron(&self) -> Result<DMatrix<f64>> {
        let n = self.node_count();
        let l = self.length();
        let nl = n * l;
        if nl > 16 {
            return Err(crate::Error::Capability(format!(
                "explicit E{{A ⊗ A}} limited to NL <= 16, got {nl}"
            )));
        }
        let mut out = DMatrix::zeros(nl * nl, nl * nl);
        for a in 0..nl {
            for c in 0..nl {
                let (k, a1, c1) = (a / l, a % l, c % l);
                if c / l != k {
                    continue;
                }
                for b in 0..nl {
                    for d in 0..nl {
                        let (m, b1, d1) = (b / l, b % l, d % l);
                        if d / l != m {
                            continue;
                        }
                        out[(a * nl + b, c * nl + d)] = if k == m {
                            self.nodes[k].ea_kron[(a1 * l + b1, c1 * l + d1)]
                        } else {
                            self.nodes[k].ea[(a1, c1)] * self.nodes[m].ea[(b1, d1)]
                        };
                    }
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn block_diag<'a>(blocks: impl Iterator<Item = &'a DMatrix<f64>>) -> DMatrix<f64> {
    let blocks: Vec<&DMatrix<f64>> = blocks.collect();
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, total);
    let mut offset = 0;
    for b in blocks {
        let s = b.nrows();
        out.view_mut((offset, offset), (s, s)).copy_from(b);
        offset += s;
    }
    out
}

/// Index quadruples `i ≤ j ≤ k ≤ l` in nested-loop order.
fn sorted_quadruples(l: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for i in 0..l {
        for j in i..l {
            for k in j..l {
                for m in k..l {
                    out.push([i, j, k, m]);
                }
            }
        }
    }
    out
}

fn quad_index(l: usize) -> impl Fn([usize; 4]) -> usize {
    let quads = sorted_quadruples(l);
    let mut table = vec![0usize; l * l * l * l];
    for (pos, q) in quads.iter().enumerate() {
        table[((q[0] * l + q[1]) * l + q[2]) * l + q[3]] = pos;
    }
    move |mut q: [usize; 4]| {
        q.sort_unstable();
        table[((q[0] * l + q[1]) * l + q[2]) * l + q[3]]
    }
}

/// Monte Carlo moments from `samples` independent stationary regressors per node.
pub fn estimate_moments(
    profiles: &[NodeSignalProfile],
    length: usize,
    samples: usize,
    seed: u64,
) -> Result<RegressorMoments> {
    if samples < 1000 {
        return Err(invalid(format!("need at least 1000 samples, got {samples}")));
    }
    if length == 0 {
        return Err(invalid("regressor length must be positive"));
    }
    for p in profiles {
        p.validate()?;
    }
    let root = SeedPath::new(seed);
    let nodes = profiles
        .par_iter()
        .enumerate()
        .map(|(k, p)| estimate_node(p, length, samples, root.child(k as u64)))
        .collect::<Vec<_>>();
    RegressorMoments::new(nodes)
}

fn estimate_node(profile: &NodeSignalProfile, l: usize, samples: usize, path: SeedPath) -> NodeMoments {
    let mut rng = path.rng();
    let stationary_sd = profile.input_variance().sqrt();
    let innovation_sd = profile.sigma_eps_sq.sqrt();
    let quads = sorted_quadruples(l);
    let mut fourth = vec![0.0; quads.len()];
    let mut ea = vec![0.0; l * l];
    let mut eb = vec![0.0; l * l];
    let mut inv_energy = 0.0;
    let mut u = vec![0.0; l];
    let mut y = vec![0.0; l];

    for _ in 0..samples {
        // oldest sample first, then run the recursion forward
        let z: f64 = StandardNormal.sample(&mut rng);
        u[l - 1] = stationary_sd * z;
        for t in (0..l - 1).rev() {
            let z: f64 = StandardNormal.sample(&mut rng);
            u[t] = profile.tau * u[t + 1] + innovation_sd * z;
        }
        let energy: f64 = u.iter().map(|x| x * x).sum();
        let inv = 1.0 / energy;
        let scale = inv.sqrt();
        for (yi, ui) in y.iter_mut().zip(&u) {
            *yi = ui * scale;
        }
        inv_energy += inv;
        for i in 0..l {
            for j in 0..l {
                let yy = y[i] * y[j];
                ea[i * l + j] += yy;
                eb[i * l + j] += yy * inv;
            }
        }
        let mut pos = 0;
        for i in 0..l {
            for j in i..l {
                let yij = y[i] * y[j];
                for k in j..l {
                    let yijk = yij * y[k];
                    for m in k..l {
                        fourth[pos] += yijk * y[m];
                        pos += 1;
                    }
                }
            }
        }
    }

    let n = samples as f64;
    let to_matrix = |v: Vec<f64>| DMatrix::from_row_slice(l, l, &v.iter().map(|x| x / n).collect::<Vec<_>>());
    let index = quad_index(l);
    let ea_kron = DMatrix::from_fn(l * l, l * l, |row, col| {
        let (i, k) = (row / l, row % l);
        let (j, m) = (col / l, col % l);
        fourth[index([i, j, k, m])] / n
    });
    NodeMoments {
        ea: to_matrix(ea),
        ea_kron,
        eb: to_matrix(eb),
        r: ar1_covariance(profile, l),
        inv_energy: inv_energy / n,
    }
}

/// Stationary AR(1) covariance `R_ij = σ²_ε τ^{|i−j|} / (1 − τ²)`.
pub fn ar1_covariance(profile: &NodeSignalProfile, length: usize) -> DMatrix<f64> {
    let var = profile.input_variance();
    DMatrix::from_fn(length, length, |i, j| {
        var * profile.tau.powi((i as i32 - j as i32).abs())
    })
}
