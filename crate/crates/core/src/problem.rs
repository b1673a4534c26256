//! A fully assembled problem instance.

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{
    assemble_form, assemble_local, fold_global, CoefficientField, FormParts, LoadFunction,
    LocalStiffness, PenaltyParams,
};
use crate::dofs::{PrimalMode, SpaceMaps};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{
    build_partition, enumerate_interface, triangulate_all, MacroEdgePair, Partition, SubdomainMesh,
};

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    /// Subdomains per side.
    pub n: usize,
    /// Intervals per subdomain side.
    pub m: usize,
    pub penalty: PenaltyParams,
    pub coefficients: CoefficientField,
    pub load: LoadFunction,
    pub primal_mode: PrimalMode,
}

impl ProblemConfig {
    pub fn new(n: usize, m: usize, coefficients: CoefficientField) -> Self {
        Self {
            n,
            m,
            penalty: PenaltyParams::default(),
            coefficients,
            load: LoadFunction::Constant(1.0),
            primal_mode: PrimalMode::default(),
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.penalty.delta = delta;
        self
    }

    pub fn with_load(mut self, load: LoadFunction) -> Self {
        self.load = load;
        self
    }

    pub fn with_primal_mode(mut self, mode: PrimalMode) -> Self {
        self.primal_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if !(self.penalty.delta > 0.0 && self.penalty.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "penalty must be positive, got {}",
                self.penalty.delta
            )));
        }
        let part = build_partition(self.n)?;
        self.coefficients.validate(&part)
    }
}

/// Summary numbers of an instance.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemSizes {
    pub subdomains: usize,
    pub global_dofs: usize,
    pub local_dofs_max: usize,
    pub primal: usize,
    pub multipliers: usize,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    pub partition: Partition,
    pub meshes: Vec<SubdomainMesh>,
    pub interface: Vec<MacroEdgePair>,
    pub maps: SpaceMaps,
    pub rho: Vec<f64>,
    pub locals: Vec<LocalStiffness>,
}

impl Problem {
    pub fn build(config: ProblemConfig) -> Result<Self> {
        config.validate()?;
        let partition = build_partition(config.n)?;
        let meshes = triangulate_all(&partition, config.m)?;
        let interface = enumerate_interface(&partition, &meshes)?;
        let maps = SpaceMaps::build(&partition, &meshes, config.primal_mode)?;
        let rho: Vec<f64> = (0..partition.count())
            .map(|i| config.coefficients.rho(&partition, i))
            .collect();
        let locals = (0..partition.count())
            .into_par_iter()
            .map(|i| {
                assemble_local(
                    &partition,
                    &meshes[i],
                    &maps.spaces[i],
                    rho[i],
                    config.penalty,
                    &config.load,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            partition,
            meshes,
            interface,
            maps,
            rho,
            locals,
        })
    }

    pub fn subdomains(&self) -> usize {
        self.partition.count()
    }

    pub fn sizes(&self) -> ProblemSizes {
        ProblemSizes {
            subdomains: self.subdomains(),
            global_dofs: self.maps.n_global,
            local_dofs_max: self.maps.spaces.iter().map(|s| s.len()).max().unwrap_or(0),
            primal: self.maps.n_primal(),
            multipliers: self.maps.n_multipliers(),
        }
    }

    /// Assembled `Â` and `f` on `X(Ω)`.
    pub fn assemble_global(&self) -> (CsrMatrix, Vec<f64>) {
        let mats: Vec<&CsrMatrix> = self.locals.iter().map(|l| &l.matrix).collect();
        let a = fold_global(self.maps.n_global, &mats, |i, k| self.maps.global_of(i, k));
        (a, self.global_load())
    }

    pub fn global_load(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.maps.n_global];
        for (i, l) in self.locals.iter().enumerate() {
            let off = self.maps.own_offset[i];
            let n_own = self.maps.spaces[i].n_own;
            f[off..off + n_own].copy_from_slice(&l.load[..n_own]);
        }
        f
    }

    /// Requested parts of the local form of subdomain `i`.
    pub fn local_form(&self, i: usize, parts: FormParts) -> Result<CsrMatrix> {
        assemble_form(
            &self.partition,
            &self.meshes[i],
            &self.maps.spaces[i],
            self.rho[i],
            self.config.penalty.delta,
            parts,
        )
    }

    /// `Σ_i d_i(u_i, u_i)` for a vector given per subdomain on `W_i(Ω'_i)`.
    pub fn d_energy(&self, u: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for (i, ui) in u.iter().enumerate() {
            total += self.local_form(i, FormParts::ENERGY)?.quad_form(ui);
        }
        Ok(total)
    }

    /// Restricts a global vector to every extended local space.
    pub fn restrict_all(&self, global: &[f64]) -> Vec<Vec<f64>> {
        (0..self.subdomains())
            .map(|i| self.maps.restrict(i, global))
            .collect()
    }
}
