//! Experiment configuration: JSON schema, validation and construction
//! of the numerical objects each experiment needs.
//!
//! A config file is a single JSON object.  `experiment` selects the
//! kind and must match the subcommand; the remaining sections are
//! validated against the preconditions of the modules they feed before
//! any computation runs, so a bad config never produces output files.

use eigenlab_core::fields::{
    MetricField, ScalarField, ScalarRole, SymTensorField, TensorRole, VectorField,
};
use eigenlab_core::linalg::SymMat;
use eigenlab_core::mesh::{CanonicalDomain, Mesh};
use eigenlab_core::operator::BoundaryCondition;
use eigenlab_core::ricci::HomogeneousFlow;
use eigenlab_core::splitting::{random_metric_variation, random_vector_field, SplittingMode};
use eigenlab_core::eigen::SolveOptions;
use eigenlab_core::variation::{FdSchedule, TensorFamily, VariationSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Spectrum,
    VaryMetric,
    VaryDomain,
    Split,
    ExtremalCheck,
    RicciFlow,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::VaryMetric => "vary-metric",
            ExperimentKind::VaryDomain => "vary-domain",
            ExperimentKind::Split => "split",
            ExperimentKind::ExtremalCheck => "extremal-check",
            ExperimentKind::RicciFlow => "ricci-flow",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { length: f64, cells: usize },
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
    Disk { radius: f64, rings: usize },
    Annulus { r_inner: f64, r_outer: f64, rings: usize, sectors: usize },
    FlatTorus { lx: f64, ly: f64, nx: usize, ny: usize },
    Sphere { radius: f64, subdivisions: usize },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Mesh> {
        let canon = match *self {
            DomainSpec::Interval { length, cells } => CanonicalDomain::Interval { length, cells },
            DomainSpec::Rectangle { lx, ly, nx, ny } => CanonicalDomain::Rectangle { lx, ly, nx, ny },
            DomainSpec::Disk { radius, rings } => CanonicalDomain::Disk { radius, rings },
            DomainSpec::Annulus {
                r_inner,
                r_outer,
                rings,
                sectors,
            } => CanonicalDomain::Annulus {
                r_inner,
                r_outer,
                rings,
                sectors,
            },
            DomainSpec::FlatTorus { lx, ly, nx, ny } => CanonicalDomain::FlatTorus { lx, ly, nx, ny },
            DomainSpec::Sphere {
                radius,
                subdivisions,
            } => CanonicalDomain::Sphere {
                radius,
                subdivisions,
            },
        };
        Ok(canon.build()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcSpec {
    Dirichlet,
    TNeumann,
}

impl BcSpec {
    pub fn to_core(self) -> BoundaryCondition {
        match self {
            BcSpec::Dirichlet => BoundaryCondition::Dirichlet,
            BcSpec::TNeumann => BoundaryCondition::TNeumann,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `T = g`.
    Metric,
    /// Constant coefficient tensor, frozen under variations.
    Fixed { xx: f64, xy: f64, yy: f64 },
    /// `T = psi g` with `psi = base + amp cos(fx x) cos(fy y)`.
    Conformal {
        base: f64,
        #[serde(default)]
        amp: f64,
        #[serde(default)]
        fx: f64,
        #[serde(default)]
        fy: f64,
    },
}

impl FamilySpec {
    fn validate(&self) -> Result<()> {
        if let FamilySpec::Conformal { base, amp, .. } = self {
            if !(base - amp.abs() > 0.0) {
                return Err(CliError::Config(format!(
                    "fields.family: conformal factor can reach {} <= 0 (base {base}, amp {amp})",
                    base - amp.abs()
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self, mesh: &Mesh) -> TensorFamily {
        match *self {
            FamilySpec::Metric => TensorFamily::MetricItself,
            FamilySpec::Fixed { xx, xy, yy } => TensorFamily::Fixed(SymTensorField::constant(
                mesh,
                SymMat::new(xx, xy, yy),
                TensorRole::Coefficient,
            )),
            FamilySpec::Conformal { base, amp, fx, fy } => {
                TensorFamily::ConformalWeight(ScalarField::from_fn(
                    mesh,
                    ScalarRole::ConformalFactor,
                    move |p| {
                        let y = if p.len() > 1 { p[1] } else { 0.0 };
                        base + amp * (fx * p[0]).cos() * (fy * y).cos()
                    },
                ))
            }
        }
    }

    /// Family for the homogeneous-flow experiments, which carry no
    /// mesh; only metric-proportional families with a constant factor
    /// make sense there.
    pub fn build_for_flow(&self) -> Result<TensorFamily> {
        match *self {
            FamilySpec::Metric => Ok(TensorFamily::MetricItself),
            FamilySpec::Conformal { base, amp, .. } => {
                if amp != 0.0 {
                    return Err(CliError::Config(
                        "fields.family.amp: flow experiments need a constant conformal factor"
                            .into(),
                    ));
                }
                Ok(TensorFamily::ConformalWeight(ScalarField {
                    role: ScalarRole::ConformalFactor,
                    values: vec![base],
                }))
            }
            FamilySpec::Fixed { .. } => Err(CliError::Config(
                "fields.family: flow experiments support `metric` or constant `conformal` only"
                    .into(),
            )),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EtaSpec {
    Zero,
    Constant { value: f64 },
    /// `amp cos(fx x) cos(fy y)`.
    Cosine { amp: f64, fx: f64, fy: f64 },
}

impl EtaSpec {
    pub fn build(&self, mesh: &Mesh) -> ScalarField {
        match *self {
            EtaSpec::Zero => ScalarField::zero(mesh, ScalarRole::Weight),
            EtaSpec::Constant { value } => ScalarField::constant(mesh, value, ScalarRole::Weight),
            EtaSpec::Cosine { amp, fx, fy } => {
                ScalarField::from_fn(mesh, ScalarRole::Weight, move |p| {
                    let y = if p.len() > 1 { p[1] } else { 0.0 };
                    amp * (fx * p[0]).cos() * (fy * y).cos()
                })
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSpec {
    #[serde(default = "default_bc")]
    pub bc: BcSpec,
    #[serde(default = "default_family")]
    pub family: FamilySpec,
    #[serde(default = "default_eta")]
    pub eta: EtaSpec,
}

fn default_bc() -> BcSpec {
    BcSpec::Dirichlet
}
fn default_family() -> FamilySpec {
    FamilySpec::Metric
}
fn default_eta() -> EtaSpec {
    EtaSpec::Zero
}

impl Default for FieldsSpec {
    fn default() -> FieldsSpec {
        FieldsSpec {
            bc: default_bc(),
            family: default_family(),
            eta: default_eta(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_residual_target")]
    pub residual_target: f64,
    #[serde(default = "default_dense_threshold")]
    pub dense_threshold: usize,
}

fn default_k() -> usize {
    6
}
fn default_residual_target() -> f64 {
    1e-8
}
fn default_dense_threshold() -> usize {
    1500
}

impl Default for SolverSpec {
    fn default() -> SolverSpec {
        SolverSpec {
            k: default_k(),
            residual_target: default_residual_target(),
            dense_threshold: default_dense_threshold(),
        }
    }
}

impl SolverSpec {
    pub fn options(&self, k: usize) -> SolveOptions {
        let mut o = SolveOptions::new(k);
        o.residual_target = self.residual_target;
        o.dense_threshold = self.dense_threshold;
        o
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSpec {
    pub steps: Vec<f64>,
}

impl FdSpec {
    pub fn schedule(&self) -> FdSchedule {
        FdSchedule {
            steps: self.steps.clone(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VariationConfig {
    /// Seeded random variation (smooth trigonometric series).
    Seeded,
    /// `H = g` (vary-metric only): the exactly non-generic direction.
    Uniform,
    /// `H = amp cos(fx x) cos(fy y) g` (vary-metric only).
    ConformalCosine { amp: f64, fx: f64, fy: f64 },
    /// `V = (x, y)` (vary-domain only).
    Dilation,
}

impl VariationConfig {
    pub fn build_metric(&self, mesh: &Mesh, g: &MetricField, seed: u64) -> VariationSpec {
        match *self {
            VariationConfig::Seeded => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                random_metric_variation(&mut rng, mesh, g)
            }
            VariationConfig::Uniform => VariationSpec {
                h: g.as_tensor(TensorRole::MetricVariation),
                eta_rate: ScalarField::zero(mesh, ScalarRole::WeightRate),
            },
            VariationConfig::ConformalCosine { amp, fx, fy } => {
                let cells = (0..mesh.nc())
                    .map(|c| {
                        let p = mesh.cell_midpoint_global(c);
                        let y = if p.len() > 1 { p[1] } else { 0.0 };
                        let f = amp * (fx * p[0]).cos() * (fy * y).cos();
                        g.at(c).scale(f)
                    })
                    .collect();
                VariationSpec {
                    h: SymTensorField::from_cells(mesh.dim, TensorRole::MetricVariation, cells),
                    eta_rate: ScalarField::zero(mesh, ScalarRole::WeightRate),
                }
            }
            VariationConfig::Dilation => unreachable!("validated"),
        }
    }

    pub fn build_domain(&self, mesh: &Mesh, seed: u64) -> VectorField {
        match *self {
            VariationConfig::Seeded => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                random_vector_field(&mut rng, mesh)
            }
            VariationConfig::Dilation => VectorField::from_fn(mesh, |p| [p[0], p[1]]),
            _ => unreachable!("validated"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitModeSpec {
    Metric,
    Domain,
}

impl SplitModeSpec {
    pub fn to_core(self) -> SplittingMode {
        match self {
            SplitModeSpec::Metric => SplittingMode::Metric,
            SplitModeSpec::Domain => SplittingMode::Domain,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub mode: SplitModeSpec,
    pub trials: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FlowSpec {
    Sphere { n: usize, radius: f64 },
    FlatTorus { lx: f64, ly: f64 },
}

impl FlowSpec {
    pub fn build(&self) -> HomogeneousFlow {
        match *self {
            FlowSpec::Sphere { n, radius } => HomogeneousFlow::Sphere { n, radius },
            FlowSpec::FlatTorus { lx, ly } => HomogeneousFlow::FlatTorus { lx, ly },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupSpec {
    pub epsilon: f64,
    pub times: Vec<f64>,
    #[serde(default = "default_level")]
    pub level: usize,
}

fn default_level() -> usize {
    1
}

/// Pass/fail thresholds for the summary record.  Every field is
/// optional; experiments fall back to documented defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    /// Relative tolerance for the experiment's key error metric.
    pub tolerance: Option<f64>,
    /// Reference eigenvalues for the spectrum experiment.
    pub reference: Option<Vec<f64>>,
    /// Minimum acceptable splitting fraction.
    pub min_fraction: Option<f64>,
    /// Threshold for the extremal deviation ratio.
    pub ratio_threshold: Option<f64>,
    /// `below` expects the metric under the threshold, `above` over it.
    pub expect: Option<ExpectSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectSpec {
    Below,
    Above,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the `--out` flag overrides it.
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub fields: FieldsSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub fd: Option<FdSpec>,
    #[serde(default)]
    pub variation: Option<VariationConfig>,
    /// Mode indices forming the cluster under study.
    #[serde(default)]
    pub cluster: Option<Vec<usize>>,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub flow: Option<FlowSpec>,
    #[serde(default)]
    pub flow_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
    /// Icosphere resolution for the finite-element flow cross-check.
    #[serde(default)]
    pub fem_subdivisions: Option<usize>,
    #[serde(default)]
    pub blowup: Option<BlowupSpec>,
    #[serde(default)]
    pub check: Option<CheckSpec>,
}

impl ExperimentConfig {
    pub fn parse(raw: &[u8]) -> Result<ExperimentConfig> {
        serde_json::from_slice(raw).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Cross-field validation; every error names the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.solver.k == 0 {
            return Err(CliError::Config("solver.k must be at least 1".into()));
        }
        if !(self.solver.residual_target > 0.0) {
            return Err(CliError::Config(
                "solver.residual_target must be positive".into(),
            ));
        }
        if let Some(fd) = &self.fd {
            if fd.steps.is_empty() {
                return Err(CliError::Config("fd.steps must not be empty".into()));
            }
            if fd.steps.iter().any(|s| !(*s > 0.0)) {
                return Err(CliError::Config("fd.steps must be positive".into()));
            }
            if fd.steps.windows(2).any(|w| w[1] >= w[0]) {
                return Err(CliError::Config(
                    "fd.steps must be strictly decreasing".into(),
                ));
            }
        }
        if let Some(cluster) = &self.cluster {
            if cluster.is_empty() {
                return Err(CliError::Config("cluster must not be empty".into()));
            }
            if cluster.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(CliError::Config(
                    "cluster must list consecutive ascending indices".into(),
                ));
            }
        }
        match self.experiment {
            ExperimentKind::Spectrum => {
                self.require_domain()?;
            }
            ExperimentKind::VaryMetric => {
                self.require_domain()?;
                self.require_cluster()?;
                if let VariationConfig::Dilation = self.require_variation()? {
                    return Err(CliError::Config(
                        "variation.kind `dilation` is a domain deformation; use vary-domain"
                            .into(),
                    ));
                }
            }
            ExperimentKind::VaryDomain => {
                self.require_domain()?;
                self.require_cluster()?;
                match self.require_variation()? {
                    VariationConfig::Seeded | VariationConfig::Dilation => {}
                    _ => {
                        return Err(CliError::Config(
                            "variation.kind must be `seeded` or `dilation` for vary-domain".into(),
                        ));
                    }
                }
            }
            ExperimentKind::Split => {
                self.require_domain()?;
                let cluster = self.require_cluster()?;
                if cluster.len() < 2 {
                    return Err(CliError::Config(
                        "cluster must have at least 2 members for split".into(),
                    ));
                }
                let split = self
                    .split
                    .as_ref()
                    .ok_or_else(|| CliError::Config("split section is required".into()))?;
                if split.trials == 0 {
                    return Err(CliError::Config("split.trials must be at least 1".into()));
                }
            }
            ExperimentKind::ExtremalCheck => {
                self.require_domain()?;
                if self.fields.bc != BcSpec::Dirichlet {
                    return Err(CliError::Config(
                        "fields.bc must be `dirichlet` for extremal-check".into(),
                    ));
                }
            }
            ExperimentKind::RicciFlow => {
                if self.domain.is_some() {
                    return Err(CliError::Config(
                        "domain is not used by ricci-flow; configure `flow` instead".into(),
                    ));
                }
                if self.flow.is_none() {
                    return Err(CliError::Config("flow section is required".into()));
                }
                let grid = self
                    .flow_grid
                    .as_ref()
                    .ok_or_else(|| CliError::Config("flow_grid is required".into()))?;
                if grid.is_empty() {
                    return Err(CliError::Config("flow_grid must not be empty".into()));
                }
                if grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CliError::Config(
                        "flow_grid must be strictly increasing".into(),
                    ));
                }
                let levels = self
                    .levels
                    .as_ref()
                    .ok_or_else(|| CliError::Config("levels is required".into()))?;
                if levels.is_empty() {
                    return Err(CliError::Config("levels must not be empty".into()));
                }
                self.fields.family.build_for_flow()?;
                if let Some(b) = &self.blowup {
                    if b.times.is_empty() {
                        return Err(CliError::Config("blowup.times must not be empty".into()));
                    }
                }
            }
        }
        // family positivity matters wherever a coefficient is built
        self.fields.family.validate()?;
        Ok(())
    }

    fn require_domain(&self) -> Result<&DomainSpec> {
        self.domain
            .as_ref()
            .ok_or_else(|| CliError::Config("domain section is required".into()))
    }

    fn require_cluster(&self) -> Result<&Vec<usize>> {
        self.cluster
            .as_ref()
            .ok_or_else(|| CliError::Config("cluster is required".into()))
    }

    fn require_variation(&self) -> Result<&VariationConfig> {
        self.variation
            .as_ref()
            .ok_or_else(|| CliError::Config("variation section is required".into()))
    }

    pub fn schedule(&self) -> FdSchedule {
        self.fd
            .as_ref()
            .map(|f| f.schedule())
            .unwrap_or_default()
    }

    pub fn check(&self) -> CheckSpec {
        self.check.clone().unwrap_or_default()
    }
}
