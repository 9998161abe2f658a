use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dromor::ambiguity::worst_case_trace;
use dromor::baselines::balanced_truncation;
use dromor::io::{read_json, BallFile, ModelFile, ProblemFile, Rows};
use dromor::matops::{matrix_from_rows, SymMatrix};
use dromor::reduction::{reduce_certain, reduce_robust, ReductionOptions};
use dromor::validation::{
    asymptotic_error_exact, check_certificate, simulate, simulate_trajectory, within_bound,
    write_mean_error_csv, write_trajectory_csv,
};
use serde_json::json;

use crate::error::CliError;

pub struct Global {
    pub tol: f64,
    pub epsilon: Option<f64>,
    pub seed: u64,
}

impl Global {
    pub fn check(&self) -> Result<(), CliError> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(CliError::Input(format!("--tol must be positive, got {}", self.tol)));
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e > 0.0) {
                return Err(CliError::Input(format!("--epsilon must be positive, got {e}")));
            }
        }
        Ok(())
    }

    fn options(&self, file: &ProblemFile, canonical: bool) -> Result<ReductionOptions, CliError> {
        let defaults = ReductionOptions::default();
        Ok(ReductionOptions {
            epsilon: self.epsilon.or(file.epsilon()?).unwrap_or(defaults.epsilon),
            tol: self.tol,
            canonical,
            ..defaults
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        })
}

fn write_all(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// `steps,trajectories[,seed]`
fn parse_mc(spec: &str, default_seed: u64) -> Result<(usize, usize, u64), CliError> {
    let bad = || CliError::Input(format!("--mc expects steps,trajectories[,seed], got `{spec}`"));
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let steps: usize = parts[0].parse().map_err(|_| bad())?;
    let trajs: usize = parts[1].parse().map_err(|_| bad())?;
    let seed = match parts.get(2) {
        Some(s) => s.parse().map_err(|_| bad())?,
        None => default_seed,
    };
    if steps == 0 || trajs == 0 {
        return Err(bad());
    }
    Ok((steps, trajs, seed))
}

pub fn reduce(
    global: &Global,
    input: &Path,
    output: &Path,
    robust: bool,
    canonical: bool,
) -> Result<(), CliError> {
    let file: ProblemFile = read_json(input)?;
    let prob = file.problem()?;
    let opts = global.options(&file, canonical)?;
    let (model, cert) = if robust {
        reduce_robust(&prob, &opts)?
    } else {
        reduce_certain(&prob.system, prob.ball.center(), prob.r, &opts)?
    };
    let text = serde_json::to_string_pretty(&ModelFile::from_model(&model, Some(&cert)))
        .expect("model files always serialize");
    write_all(output, &text)?;
    println!("order: {}", model.order());
    println!("beta_star: {}", cert.beta_star);
    println!("gamma_tilde_star: {}", cert.gamma_tilde_star);
    println!("spectral_radius: {}", model.spectral_radius());
    println!("psi_max_eig: {}", cert.psi_max_eig);
    println!("trace_slack: {}", cert.trace_slack);
    Ok(())
}

pub fn worst_case(global: &Global, input: &Path) -> Result<(), CliError> {
    let file: BallFile = read_json(input)?;
    let ball = file.ball()?;
    let res = worst_case_trace(&ball, global.tol).map_err(dromor::ReductionError::from)?;
    let out = json!({
        "beta_star": res.beta_star,
        "Q_delta": res.q_delta.to_rows(),
        "E_Q": res.e_q.to_rows(),
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json values serialize"));
    Ok(())
}

fn covariance_file(path: &str) -> Result<SymMatrix, CliError> {
    let rows: Rows = read_json(Path::new(path))?;
    let m = matrix_from_rows(&rows).map_err(|e| CliError::Input(format!("--q {path}: {e}")))?;
    SymMatrix::new(m).map_err(|e| CliError::Input(format!("--q {path}: {e}")))
}

pub fn validate(
    global: &Global,
    problem: &Path,
    model_path: &Path,
    q_choice: Option<&str>,
    mc: Option<&str>,
    trajectory: Option<&Path>,
) -> Result<(), CliError> {
    let file: ProblemFile = read_json(problem)?;
    let sys = file.system()?;
    let model_file: ModelFile = read_json(model_path)?;
    let model = model_file.model()?;
    let cert = model_file.certificate()?;
    let q_true = file.q_true()?;

    let choice = q_choice.unwrap_or(if q_true.is_some() { "true" } else { "eff" });
    let (label, q) = match choice {
        "true" => (
            "true",
            q_true.clone().ok_or_else(|| {
                CliError::Input("field `Q_true`: required by --q true".into())
            })?,
        ),
        "eff" => (
            "eff",
            cert.as_ref()
                .ok_or_else(|| CliError::Input("--q eff needs a model with a certificate".into()))?
                .q_eff
                .clone(),
        ),
        path => ("file", covariance_file(path)?),
    };

    let exact = asymptotic_error_exact(&sys, &model, &q)?;
    let mut out = String::new();
    writeln!(out, "covariance: {label}").unwrap();
    writeln!(out, "exact_error: {exact}").unwrap();
    writeln!(out, "spectral_radius: {}", model.spectral_radius()).unwrap();

    let mut satisfied = true;
    match &cert {
        Some(cert) => {
            let premise_q = (label != "eff").then_some(&q);
            let report = check_certificate(&sys, &model, cert, premise_q)?;
            satisfied = within_bound(exact, cert.gamma_tilde_star);
            let reproduced = report.psi_max_eig == cert.psi_max_eig
                && report.trace_slack == cert.trace_slack;
            writeln!(out, "gamma_tilde_star: {}", cert.gamma_tilde_star).unwrap();
            writeln!(out, "bound_satisfied: {}", if satisfied { "yes" } else { "no" }).unwrap();
            writeln!(out, "psi_max_eig: {}", report.psi_max_eig).unwrap();
            if let Some(v) = report.lmi_min_eig {
                writeln!(out, "lmi_min_eig: {v}").unwrap();
            }
            writeln!(out, "trace_slack: {}", report.trace_slack).unwrap();
            writeln!(out, "error_at_q_eff: {}", report.error_at_q_eff).unwrap();
            writeln!(out, "certificate_reproduced: {}", if reproduced { "yes" } else { "no" })
                .unwrap();
            match &report.true_covariance {
                Some(t) => writeln!(
                    out,
                    "loewner_premise: {} (margins {:?})",
                    if t.loewner.holds { "holds" } else { "violated" },
                    t.loewner.margin_eigs
                )
                .unwrap(),
                None => writeln!(out, "loewner_premise: n/a").unwrap(),
            }
        }
        None => {
            writeln!(out, "bound_satisfied: n/a (model has no certificate)").unwrap();
        }
    }

    if let Some(spec) = mc {
        let (steps, trajs, seed) = parse_mc(spec, global.seed)?;
        let stats = simulate(&sys, &model, &q, steps, trajs, seed)?;
        writeln!(
            out,
            "mc_tail_error: {} +- {} (steps {steps}, trajectories {trajs}, seed {seed})",
            stats.tail_mean, stats.tail_stderr
        )
        .unwrap();
        if let Some(path) = trajectory {
            let traj = simulate_trajectory(&sys, &model, &q, steps, seed, 0)?;
            write_trajectory_csv(create(path)?, &traj)?;
        }
    }
    print!("{out}");
    if satisfied {
        Ok(())
    } else {
        Err(CliError::BoundViolated)
    }
}

pub fn compare(
    global: &Global,
    problem: &Path,
    csv_path: Option<&Path>,
    series: Option<&Path>,
    mc: &str,
) -> Result<(), CliError> {
    let file: ProblemFile = read_json(problem)?;
    let q_true = file
        .q_true()?
        .ok_or_else(|| CliError::Input("field `Q_true`: required by compare".into()))?;
    let prob = file.problem()?;
    let opts = global.options(&file, true)?;
    let (robust, cert) = reduce_robust(&prob, &opts)?;
    let bt = balanced_truncation(&prob.system, prob.ball.center(), prob.r)?;
    let robust_err = asymptotic_error_exact(&prob.system, &robust, &q_true)?;
    let bt_err = asymptotic_error_exact(&prob.system, &bt, &q_true)?;

    let sink: Box<dyn Write> = match csv_path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let rows = [
        [
            "dromor".to_string(),
            robust_err.to_string(),
            cert.gamma_tilde_star.to_string(),
            robust.spectral_radius().to_string(),
        ],
        [
            "bt".to_string(),
            bt_err.to_string(),
            String::new(),
            bt.spectral_radius().to_string(),
        ],
    ];
    let write = |w: &mut csv::Writer<Box<dyn Write>>| -> Result<(), csv::Error> {
        w.write_record(["method", "exact_error", "gamma_bound", "spectral_radius"])?;
        for row in &rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(dromor::validation::ValidationError::from)?;

    if let Some(path) = series {
        let (steps, trajs, seed) = parse_mc(mc, global.seed)?;
        let a = simulate(&prob.system, &robust, &q_true, steps, trajs, seed)?;
        let b = simulate(&prob.system, &bt, &q_true, steps, trajs, seed)?;
        write_mean_error_csv(create(path)?, &[("dromor", &a), ("bt", &b)])?;
    }
    Ok(())
}
