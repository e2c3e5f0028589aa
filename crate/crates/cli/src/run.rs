use std::path::{Path, PathBuf};

use latticewalk::exec::derive_seeds;
use latticewalk::io::{self, fmt_f64, write_file};
use latticewalk::tomography::{fit_dip, simulate_measurements};
use latticewalk::*;
use serde::Serialize;

use crate::config::{mode, ExperimentConfig, Reference, Task};
use crate::fail::{CliError, CliResult};

pub struct Context {
    pub cfg: ExperimentConfig,
    /// Directory holding the config file; relative data paths resolve against it.
    pub base: PathBuf,
    pub out: PathBuf,
    pub fig5: bool,
}

impl Context {
    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.out.join(name);
        write_file(&path, contents).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }

    fn read(&self, rel: &str) -> CliResult<String> {
        let path = self.base.join(rel);
        io::read_file(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }

    fn pair(&self, n: usize) -> CliResult<PairInput> {
        let (a, b) = self.cfg.input_pair(n)?;
        Ok(PairInput::new(a, b, self.cfg.source.indistinguishability)?)
    }

    fn loss(&self, n: usize) -> CliResult<LossVector> {
        match self.cfg.detection.as_ref().and_then(|d| d.efficiencies.clone()) {
            Some(e) => Ok(LossVector::new(e)?),
            None => Ok(LossVector::lossless(n)),
        }
    }
}

/// Unitary for the configured lattice; `disorder_seed` replaces the
/// configured disorder seed when given.
fn build_unitary(cfg: &ExperimentConfig, disorder_seed: Option<u64>) -> CliResult<UnitaryMatrix> {
    let l = &cfg.lattice;
    let c = build_coupling_matrix(&cfg.geometry()?, l.c0, l.d0, l.beta)?;
    match cfg.disorder_spec() {
        Some(mut spec) => {
            if let Some(s) = disorder_seed {
                spec.seed = s;
            }
            Ok(evolve_segments(&apply_disorder(&c, &spec, l.total_length)?)?)
        }
        None => Ok(evolve_unitary(&c, l.total_length)?),
    }
}

/// One-based pair for messages.
fn show((i, j): (usize, usize)) -> String {
    format!("({},{})", i + 1, j + 1)
}

struct Sampled {
    record: CountRecord,
    estimate: CorrelationEstimate,
}

fn sample(ctx: &Context, gamma: &CorrelationMatrix) -> CliResult<Sampled> {
    let d =
        ctx.cfg.detection.as_ref().ok_or_else(|| CliError::schema("this task needs a detection section"))?;
    let loss = ctx.loss(gamma.dim())?;
    let record = sample_counts(gamma, d.n_pairs, &loss, d.bunching_split, d.seed)?;
    let estimate = estimate_correlation(&record, true, d.correct_loss.then_some(&loss))?;
    Ok(Sampled { record, estimate })
}

pub fn run(ctx: &Context) -> CliResult<String> {
    let n = ctx.cfg.validate()?;
    let u = build_unitary(&ctx.cfg, None)?;
    match &ctx.cfg.task {
        Task::Unitary => {
            ctx.write("unitary.csv", &io::complex_matrix_to_csv(u.matrix()))?;
            Ok(format!(
                "unitary: {n} modes, z = {}, max |U^dag U - I| = {:.3e}",
                ctx.cfg.lattice.total_length,
                u.unitarity_error()
            ))
        }
        Task::Singles { inputs } => {
            let modes: Vec<usize> = match inputs {
                Some(v) => v.iter().map(|&m| mode("task.inputs", m, n)).collect::<CliResult<_>>()?,
                None => (0..n).collect(),
            };
            let mut set = Vec::with_capacity(modes.len());
            for &m in &modes {
                let s = singles_distribution(&u, m)?;
                ctx.write(&format!("singles_input_{}.csv", m + 1), &io::singles_to_csv(&s))?;
                set.push(s);
            }
            ctx.write("singles.csv", &io::singles_set_to_csv(&set))?;
            let iprs: Vec<f64> = set.iter().map(|s| s.ipr()).collect();
            let lo = iprs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = iprs.iter().cloned().fold(0.0, f64::max);
            Ok(format!("singles: {} inputs, IPR {lo:.6} to {hi:.6}", set.len()))
        }
        Task::Corr => {
            let pair = ctx.pair(n)?;
            let q = quantum_correlation(&u, &pair)?;
            let c = classical_correlation(&u, &pair)?;
            let p = partial_correlation(&u, &pair)?;
            ctx.write("gamma_quantum.csv", &io::correlation_to_csv(&q))?;
            ctx.write("gamma_classical.csv", &io::correlation_to_csv(&c))?;
            ctx.write("gamma_partial.csv", &io::correlation_to_csv(&p))?;
            Ok(format!(
                "corr: inputs {}, mu = {}, sum = {:.12}, S(quantum, classical) = {:.6}",
                show((pair.mode_i(), pair.mode_j())),
                pair.indistinguishability(),
                q.total(),
                similarity(&q, &c)?
            ))
        }
        Task::Violation => {
            let pair = ctx.pair(n)?;
            let gamma = partial_correlation(&u, &pair)?;
            let v = violation_matrix(&gamma)?;
            ctx.write("violation.csv", &io::violation_to_csv(&v, ctx.fig5))?;
            let (i, j, vmax) =
                v.max_entry().ok_or_else(|| CliError::schema("violation needs at least 2 modes"))?;
            let mut line = format!("violation: max V = {vmax:.6} at {}", show((i, j)));
            if ctx.cfg.detection.is_some() {
                let s = sample(ctx, &gamma)?;
                let sig = violation_significance(&s.estimate.gamma, &s.estimate.sigma)?;
                ctx.write("counts.csv", &io::counts_to_csv(&s.record))?;
                ctx.write("counts.json", &io::counts_to_json(&s.record)?)?;
                ctx.write("gamma_estimate.csv", &io::correlation_to_csv(&s.estimate.gamma))?;
                ctx.write("violation_significance.csv", &io::significance_to_csv(&sig, ctx.fig5))?;
                if let Some((k, l, z)) = sig.max_significance() {
                    line += &format!(
                        "; max V/sigma = {z:.2} at {} from {} coincidences",
                        show((k, l)),
                        s.record.total_counts()
                    );
                }
            }
            Ok(line)
        }
        Task::Similarity { against } => {
            let pair = ctx.pair(n)?;
            let exact = partial_correlation(&u, &pair)?;
            let (s, what) = match against {
                Reference::Sampled => {
                    let sm = sample(ctx, &exact)?;
                    ctx.write("counts.csv", &io::counts_to_csv(&sm.record))?;
                    ctx.write("gamma_exact.csv", &io::correlation_to_csv(&exact))?;
                    ctx.write("gamma_estimate.csv", &io::correlation_to_csv(&sm.estimate.gamma))?;
                    (
                        similarity(&sm.estimate.gamma, &exact)?,
                        format!("sampled ({} coincidences) vs exact", sm.record.total_counts()),
                    )
                }
                Reference::Classical => {
                    let q = quantum_correlation(&u, &pair)?;
                    (similarity(&q, &classical_correlation(&u, &pair)?)?, "quantum vs classical".to_string())
                }
                Reference::Partial => {
                    let q = quantum_correlation(&u, &pair)?;
                    (
                        similarity(&q, &exact)?,
                        format!("quantum vs partial (mu = {})", pair.indistinguishability()),
                    )
                }
            };
            ctx.write(
                "similarity.json",
                &serde_json::json!({ "similarity": s, "comparison": what }).to_string(),
            )?;
            Ok(format!("similarity: S = {s:.6} ({what})"))
        }
        Task::HomScan { output_pair, delays } => {
            let pair = ctx.pair(n)?;
            let k = mode("task.output_pair", output_pair[0], n)?;
            let l = mode("task.output_pair", output_pair[1], n)?;
            let step = (delays.stop - delays.start) / (delays.steps - 1) as f64;
            let taus: Vec<f64> = (0..delays.steps).map(|s| delays.start + step * s as f64).collect();
            let curve = hom_dip_curve(&u, &pair, (k, l), &taus, ctx.cfg.source.coherence_time)?;
            let mut csv = String::from("delay,value\n");
            for (t, v) in &curve {
                csv += &format!("{},{}\n", fmt_f64(*t), fmt_f64(*v));
            }
            ctx.write("hom_scan.csv", &csv)?;
            let ideal = simulate_visibility(&u, (pair.mode_i(), pair.mode_j()), (k, l))?.visibility;
            let fitted =
                fit_dip(&curve).map(|f| format!("{:.6}", f.visibility())).unwrap_or_else(|_| "n/a".into());
            Ok(format!(
                "hom-scan: outputs {}, fitted visibility {fitted}, ideal {:.6}",
                show((k, l)),
                ideal * pair.indistinguishability()
            ))
        }
        Task::Ensemble { n_realizations } => ensemble(ctx, n, *n_realizations),
        Task::Tomography { input_modes, plan, events, seed, restarts, singles_csv, visibilities_csv } => {
            let modes: Vec<usize> =
                input_modes.iter().map(|&m| mode("task.input_modes", m, n)).collect::<CliResult<_>>()?;
            let scans = plan_scans(&modes, n, *plan)?;
            ctx.write("plan.csv", &io::plan_to_csv(&scans))?;
            let (singles, visibilities, simulated) = match (singles_csv, visibilities_csv) {
                (Some(s), Some(v)) => (
                    io::singles_set_from_csv(&ctx.read(s)?)?,
                    io::visibilities_from_csv(&ctx.read(v)?)?,
                    false,
                ),
                _ => {
                    let m = simulate_measurements(&u, &modes, &scans, *events, *seed)?;
                    ctx.write("singles.csv", &io::singles_set_to_csv(&m.singles))?;
                    ctx.write("visibilities.csv", &io::visibilities_to_csv(&m.visibilities))?;
                    (m.singles, m.visibilities, true)
                }
            };
            let opts = ReconstructOptions { restarts: *restarts, seed: *seed, ..Default::default() };
            let est = reconstruct_submatrix(&singles, &visibilities, &opts)?;
            ctx.write("estimate.json", &io::estimate_to_json(&est)?)?;
            let mut line = format!(
                "tomography: {} scans, rms misfit {:.3e}, {}",
                visibilities.len(),
                est.rms_misfit(),
                if est.consistent { "consistent" } else { "INCONSISTENT" }
            );
            let pair = ctx.pair(n)?;
            if modes.contains(&pair.mode_i()) && modes.contains(&pair.mode_j()) {
                let predicted = predict_correlation(&est, &pair)?;
                ctx.write("gamma_predicted.csv", &io::correlation_to_csv(&predicted))?;
                if simulated {
                    let s = similarity(&predicted, &partial_correlation(&u, &pair)?)?;
                    line += &format!(", S(predicted, true) = {s:.6}");
                }
            }
            Ok(line)
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
struct Stats {
    mean: f64,
    median: f64,
    std: f64,
}

fn stats(v: &[f64]) -> Stats {
    // deviations from the first value keep identical samples at exactly zero spread
    let n = v.len() as f64;
    let shift = v[0];
    let mean_d = v.iter().map(|x| x - shift).sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - shift - mean_d).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let median = if s.len() % 2 == 1 { s[s.len() / 2] } else { 0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2]) };
    Stats { mean: shift + mean_d, median, std: var.sqrt() }
}

#[derive(Debug, Clone, Copy)]
struct Realization {
    seed: u64,
    similarity: f64,
    max_significance: f64,
    ipr: f64,
}

fn ensemble(ctx: &Context, n: usize, count: usize) -> CliResult<String> {
    let root = ctx.cfg.disorder.as_ref().map(|d| d.seed).unwrap_or_default();
    let seeds = derive_seeds(root, count);
    let pair = ctx.pair(n)?;
    let results = Execution::default().map_slice(&seeds, |&seed| -> CliResult<Realization> {
        let u = build_unitary(&ctx.cfg, Some(seed))?;
        let gamma = partial_correlation(&u, &pair)?;
        let s = sample(ctx, &gamma)?;
        let sig = violation_significance(&s.estimate.gamma, &s.estimate.sigma)?;
        let ipr = 0.5
            * (singles_distribution(&u, pair.mode_i())?.ipr()
                + singles_distribution(&u, pair.mode_j())?.ipr());
        Ok(Realization {
            seed,
            similarity: similarity(&s.estimate.gamma, &gamma)?,
            max_significance: sig.max_significance().map_or(0.0, |m| m.2),
            ipr,
        })
    });
    let rows: Vec<Realization> = results.into_iter().collect::<CliResult<_>>()?;
    let mut csv = String::from("realization,seed,similarity,max_significance,ipr\n");
    for (k, r) in rows.iter().enumerate() {
        csv += &format!(
            "{},{},{},{},{}\n",
            k + 1,
            r.seed,
            fmt_f64(r.similarity),
            fmt_f64(r.max_significance),
            fmt_f64(r.ipr)
        );
    }
    ctx.write("ensemble.csv", &csv)?;
    let pick = |f: fn(&Realization) -> f64| stats(&rows.iter().map(f).collect::<Vec<_>>());
    let (s, z, ipr) = (pick(|r| r.similarity), pick(|r| r.max_significance), pick(|r| r.ipr));
    let summary = serde_json::json!({
        "n_realizations": count,
        "root_seed": root,
        "similarity": s,
        "max_significance": z,
        "ipr": ipr,
    });
    ctx.write("ensemble_summary.json", &serde_json::to_string_pretty(&summary).expect("plain values"))?;
    Ok(format!(
        "ensemble: {count} realizations, similarity {:.6} +/- {:.2e}, max V/sigma median {:.2}, IPR mean {:.4}",
        s.mean, s.std, z.median, ipr.mean
    ))
}

pub fn resolve_out(cli_out: Option<&Path>, cfg: &ExperimentConfig, base: &Path) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(crate::OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    match &cfg.output.dir {
        Some(d) => base.join(d),
        None => base.join("out"),
    }
}
