//! Experiment configuration. Mode indices are 1-based, as in the output files.

use latticewalk::{DisorderSpec, LatticeGeometry, PlanMode};
use serde::Deserialize;

use crate::fail::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeSection,
    #[serde(default)]
    pub disorder: Option<DisorderSection>,
    pub source: SourceSection,
    #[serde(default)]
    pub detection: Option<DetectionSection>,
    pub task: Task,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Geometry {
    Chain { n: usize },
    Grid { rows: usize, cols: usize },
    Explicit { positions: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub geometry: Geometry,
    pub spacing: f64,
    pub c0: f64,
    pub d0: f64,
    #[serde(default)]
    pub beta: f64,
    pub total_length: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSection {
    pub seed: u64,
    pub edge_jitter: f64,
    pub segments: usize,
    #[serde(default)]
    pub segment_length_jitter: f64,
    #[serde(default)]
    pub diagonal_jitter: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub input_pair: [usize; 2],
    #[serde(default = "one")]
    pub indistinguishability: f64,
    #[serde(default = "one")]
    pub coherence_time: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub n_pairs: u64,
    /// Per-mode detection efficiencies; lossless when absent.
    #[serde(default)]
    pub efficiencies: Option<Vec<f64>>,
    #[serde(default = "half")]
    pub bunching_split: f64,
    pub seed: u64,
    #[serde(default)]
    pub correct_loss: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub fig5_compatible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Sampled,
    Classical,
    Partial,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayGrid {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Unitary,
    Singles {
        #[serde(default)]
        inputs: Option<Vec<usize>>,
    },
    Corr,
    Violation,
    Similarity {
        #[serde(default = "sampled")]
        against: Reference,
    },
    HomScan {
        output_pair: [usize; 2],
        delays: DelayGrid,
    },
    Ensemble {
        n_realizations: usize,
    },
    Tomography {
        input_modes: Vec<usize>,
        #[serde(default = "compact_plan")]
        plan: PlanMode,
        /// Coincidence events per scan and photons per singles histogram;
        /// exact data when absent.
        #[serde(default)]
        events: Option<u64>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "restarts")]
        restarts: usize,
        /// Measured data to reconstruct from instead of simulating.
        #[serde(default)]
        singles_csv: Option<String>,
        #[serde(default)]
        visibilities_csv: Option<String>,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Unitary => "unitary",
            Task::Singles { .. } => "singles",
            Task::Corr => "corr",
            Task::Violation => "violation",
            Task::Similarity { .. } => "similarity",
            Task::HomScan { .. } => "hom-scan",
            Task::Ensemble { .. } => "ensemble",
            Task::Tomography { .. } => "tomography",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn sampled() -> Reference {
    Reference::Sampled
}

fn compact_plan() -> PlanMode {
    PlanMode::Compact
}

fn restarts() -> usize {
    32
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::schema(format!("{name} must be positive, got {v}")))
    }
}

/// 1-based config index to 0-based mode.
pub fn mode(name: &str, v: usize, n: usize) -> CliResult<usize> {
    if v >= 1 && v <= n {
        Ok(v - 1)
    } else {
        Err(CliError::schema(format!("{name} = {v} is outside 1..={n}")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::schema(format!("config: {e}")))
    }

    pub fn geometry(&self) -> CliResult<LatticeGeometry> {
        let l = &self.lattice;
        let g = match &l.geometry {
            Geometry::Chain { n } => LatticeGeometry::chain(*n, l.spacing),
            Geometry::Grid { rows, cols } => LatticeGeometry::grid(*rows, *cols, l.spacing),
            Geometry::Explicit { positions } => LatticeGeometry::explicit(positions.clone(), l.spacing),
        };
        g.map_err(CliError::schema_from)
    }

    pub fn disorder_spec(&self) -> Option<DisorderSpec> {
        self.disorder.as_ref().map(|d| {
            let mut spec = DisorderSpec::new(d.seed, d.edge_jitter, d.segments, d.segment_length_jitter);
            spec.diagonal_jitter = d.diagonal_jitter;
            spec
        })
    }

    pub fn input_pair(&self, n: usize) -> CliResult<(usize, usize)> {
        let [a, b] = self.source.input_pair;
        let (a, b) = (mode("source.input_pair", a, n)?, mode("source.input_pair", b, n)?);
        if a == b {
            return Err(CliError::schema("source.input_pair must name two distinct modes"));
        }
        Ok((a, b))
    }

    /// Semantic checks beyond the JSON schema; runs no simulation.
    pub fn validate(&self) -> CliResult<usize> {
        let l = &self.lattice;
        positive("lattice.spacing", l.spacing)?;
        positive("lattice.c0", l.c0)?;
        positive("lattice.d0", l.d0)?;
        positive("lattice.total_length", l.total_length)?;
        if !l.beta.is_finite() {
            return Err(CliError::schema("lattice.beta must be finite"));
        }
        let n = self.geometry()?.n_sites();
        if let Some(spec) = self.disorder_spec() {
            spec.validate().map_err(CliError::schema_from)?;
        }
        self.input_pair(n)?;
        let mu = self.source.indistinguishability;
        if !(0.0..=1.0).contains(&mu) {
            return Err(CliError::schema(format!(
                "source.indistinguishability must lie in [0, 1], got {mu}"
            )));
        }
        positive("source.coherence_time", self.source.coherence_time)?;
        if let Some(d) = &self.detection {
            if d.n_pairs == 0 {
                return Err(CliError::schema("detection.n_pairs must be at least 1"));
            }
            if !(d.bunching_split > 0.0 && d.bunching_split < 1.0) {
                return Err(CliError::schema(format!(
                    "detection.bunching_split must lie in (0, 1), got {}",
                    d.bunching_split
                )));
            }
            if let Some(e) = &d.efficiencies {
                if e.len() != n {
                    return Err(CliError::schema(format!(
                        "detection.efficiencies has {} entries for {n} modes",
                        e.len()
                    )));
                }
                latticewalk::LossVector::new(e.clone()).map_err(CliError::schema_from)?;
            }
        }
        match &self.task {
            Task::Singles { inputs: Some(inputs) } => {
                for &m in inputs {
                    mode("task.inputs", m, n)?;
                }
            }
            Task::Similarity { against: Reference::Sampled } if self.detection.is_none() => {
                return Err(CliError::schema(
                    "task similarity against sampled data needs a detection section",
                ));
            }
            Task::HomScan { output_pair, delays } => {
                let (k, l) = (
                    mode("task.output_pair", output_pair[0], n)?,
                    mode("task.output_pair", output_pair[1], n)?,
                );
                if k == l {
                    return Err(CliError::schema("task.output_pair must name two distinct modes"));
                }
                if delays.steps < 2
                    || !delays.start.is_finite()
                    || !delays.stop.is_finite()
                    || delays.stop <= delays.start
                {
                    return Err(CliError::schema("task.delays needs stop > start and at least 2 steps"));
                }
            }
            Task::Ensemble { n_realizations } => {
                if *n_realizations == 0 {
                    return Err(CliError::schema("task.n_realizations must be at least 1"));
                }
                if self.disorder.is_none() {
                    return Err(CliError::schema("task ensemble needs a disorder section"));
                }
                if self.detection.is_none() {
                    return Err(CliError::schema("task ensemble needs a detection section"));
                }
            }
            Task::Tomography { input_modes, events, restarts, singles_csv, visibilities_csv, .. } => {
                if input_modes.len() < 2 {
                    return Err(CliError::schema("task.input_modes needs at least two modes"));
                }
                let mut seen = Vec::new();
                for &m in input_modes {
                    let m = mode("task.input_modes", m, n)?;
                    if seen.contains(&m) {
                        return Err(CliError::schema("task.input_modes must be distinct"));
                    }
                    seen.push(m);
                }
                if *events == Some(0) {
                    return Err(CliError::schema("task.events must be at least 1"));
                }
                if *restarts == 0 {
                    return Err(CliError::schema("task.restarts must be at least 1"));
                }
                if singles_csv.is_some() != visibilities_csv.is_some() {
                    return Err(CliError::schema("task.singles_csv and task.visibilities_csv go together"));
                }
            }
            _ => {}
        }
        Ok(n)
    }
}
