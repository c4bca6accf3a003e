//! CSV artifacts. Every float is written in Rust's shortest round-trip form.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, domain, Result};
use crate::estimation::FitResult;
use crate::experiments::ErrorTable;
use crate::kalman::FilterResult;
use crate::smoother::SmootherResult;
use crate::state_space::{ModelParams, Trajectory};

pub const ERROR_TABLE_HEADER: [&str; 13] = [
    "alpha",
    "beta",
    "regime",
    "Z_effective",
    "filter_mse_mean",
    "smoother_mse_mean",
    "filter_mse_median",
    "mean_Q_hat",
    "mean_R_hat",
    "mean_A_hat",
    "mean_C_hat",
    "mean_final_Sigma_kk",
    "excluded_count",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// `name` for a scalar, `name_i` / `name_i_j` otherwise (row-major).
fn names(name: &str, rows: usize, cols: usize, vector: bool) -> Vec<String> {
    if rows * cols == 1 {
        return vec![name.to_string()];
    }
    if vector {
        return (0..rows).map(|i| format!("{name}_{i}")).collect();
    }
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| format!("{name}_{i}_{j}")))
        .collect()
}

fn push_vec(rec: &mut Vec<String>, v: &DVector<f64>) {
    rec.extend(v.iter().map(|&x| fmt_f64(x)));
}

fn push_mat(rec: &mut Vec<String>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            rec.push(fmt_f64(m[(i, j)]));
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// Columns `k, x, y` (indexed `x_i`, `y_i` for vector models).
pub fn write_trajectory(path: &Path, t: &Trajectory<f64>) -> Result<()> {
    if t.is_empty() {
        return Err(domain("empty trajectory"));
    }
    let m = t.states[0].len();
    let d = t.observations[0].len();
    let mut w = writer(path)?;
    let mut head = vec!["k".to_string()];
    head.extend(names("x", m, 1, true));
    head.extend(names("y", d, 1, true));
    w.write_record(&head)?;
    for (k, (x, y)) in t.states.iter().zip(&t.observations).enumerate() {
        let mut rec = vec![k.to_string()];
        push_vec(&mut rec, x);
        push_vec(&mut rec, y);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the observation columns (`y` or `y_*`) and, when present, the state
/// columns of a trajectory file.
pub fn read_trajectory(path: &Path) -> Result<Trajectory<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let head = r.headers()?.clone();
    let pick = |p: &str| -> Vec<usize> {
        head.iter()
            .enumerate()
            .filter(|(_, h)| *h == p || h.strip_prefix(p).is_some_and(|s| s.starts_with('_')))
            .map(|(i, _)| i)
            .collect()
    };
    let ys = pick("y");
    let xs = pick("x");
    if ys.is_empty() {
        return Err(domain(format!("{} has no y column", path.display())));
    }
    let mut states = Vec::new();
    let mut observations = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |cols: &[usize]| -> Result<DVector<f64>> {
            let v = cols
                .iter()
                .map(|&i| {
                    rec.get(i)
                        .unwrap_or("")
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| domain(format!("row {}: bad number in column {i}", line + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(DVector::from_vec(v))
        };
        observations.push(parse(&ys)?);
        if !xs.is_empty() {
            states.push(parse(&xs)?);
        }
    }
    if observations.is_empty() {
        return Err(domain(format!("{} has no data rows", path.display())));
    }
    Ok(Trajectory {
        states,
        observations,
    })
}

fn filter_header(m: usize, d: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend(names("x_pred", m, 1, true));
    h.extend(names("Sigma_pred", m, m, false));
    h.extend(names("x_filt", m, 1, true));
    h.extend(names("Sigma_filt", m, m, false));
    h.extend(names("nu", d, 1, true));
    h.extend(names("H", d, d, false));
    h.extend(names("G", m, d, false));
    h
}

fn filter_record(f: &FilterResult<f64>, k: usize) -> Vec<String> {
    let mut rec = vec![k.to_string()];
    push_vec(&mut rec, &f.predicted_means[k]);
    push_mat(&mut rec, &f.predicted_covs[k]);
    push_vec(&mut rec, &f.filtered_means[k]);
    push_mat(&mut rec, &f.filtered_covs[k]);
    push_vec(&mut rec, &f.innovations[k]);
    push_mat(&mut rec, &f.innovation_covs[k]);
    push_mat(&mut rec, &f.gains[k]);
    rec
}

fn filter_dims(f: &FilterResult<f64>) -> Result<(usize, usize)> {
    if f.is_empty() {
        return Err(domain("empty filter result"));
    }
    Ok((f.filtered_means[0].len(), f.innovations[0].len()))
}

/// Columns `k, x_pred, Sigma_pred, x_filt, Sigma_filt, nu, H, G`.
pub fn write_filter(path: &Path, f: &FilterResult<f64>) -> Result<()> {
    let (m, d) = filter_dims(f)?;
    let mut w = writer(path)?;
    w.write_record(filter_header(m, d))?;
    for k in 0..f.len() {
        w.write_record(filter_record(f, k))?;
    }
    w.flush()?;
    Ok(())
}

/// The filter columns followed by `x_smooth, Sigma_smooth, Sigma_lag`;
/// `Sigma_lag` is `Sigma_{k,k-1|N}` and is empty at `k = 0`.
pub fn write_smoother(path: &Path, f: &FilterResult<f64>, s: &SmootherResult<f64>) -> Result<()> {
    let (m, d) = filter_dims(f)?;
    if s.len() != f.len() {
        return Err(dims("smoother and filter results have different lengths"));
    }
    let mut w = writer(path)?;
    let mut head = filter_header(m, d);
    head.extend(names("x_smooth", m, 1, true));
    head.extend(names("Sigma_smooth", m, m, false));
    head.extend(names("Sigma_lag", m, m, false));
    w.write_record(&head)?;
    for k in 0..f.len() {
        let mut rec = filter_record(f, k);
        push_vec(&mut rec, &s.smoothed_means[k]);
        push_mat(&mut rec, &s.smoothed_covs[k]);
        if k == 0 {
            rec.extend(std::iter::repeat_n(String::new(), m * m));
        } else {
            push_mat(&mut rec, &s.lag_one_covs[k - 1]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format `field, index, value`: one `loglik` row per trace entry, then
/// the fitted blocks flattened row-major, then `iterations` and `converged`.
pub fn write_fit(path: &Path, fit: &FitResult<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["field", "index", "value"])?;
    for (i, ll) in fit.loglik_trace.iter().enumerate() {
        w.write_record(["loglik", &i.to_string(), &fmt_f64(*ll)])?;
    }
    for (name, values) in param_blocks(&fit.params) {
        for (i, v) in values.iter().enumerate() {
            w.write_record([name, &i.to_string(), &fmt_f64(*v)])?;
        }
    }
    w.write_record(["iterations", "0", &fit.iterations.to_string()])?;
    w.write_record(["converged", "0", if fit.converged { "1" } else { "0" }])?;
    w.flush()?;
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn param_blocks(p: &ModelParams<f64>) -> [(&'static str, Vec<f64>); 6] {
    [
        ("mu", p.mu.iter().copied().collect()),
        ("Sigma", row_major(&p.sigma)),
        ("A", row_major(&p.a)),
        ("C", row_major(&p.c)),
        ("Q", row_major(&p.q)),
        ("R", row_major(&p.r)),
    ]
}

pub fn write_error_table(path: &Path, t: &ErrorTable) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ERROR_TABLE_HEADER)?;
    for r in &t.rows {
        w.write_record([
            fmt_f64(r.alpha),
            fmt_f64(r.beta),
            r.regime.name().to_string(),
            r.z_effective.to_string(),
            fmt_f64(r.filter_mse_mean),
            fmt_f64(r.smoother_mse_mean),
            fmt_f64(r.filter_mse_median),
            fmt_f64(r.mean_q_hat),
            fmt_f64(r.mean_r_hat),
            fmt_f64(r.mean_a_hat),
            fmt_f64(r.mean_c_hat),
            fmt_f64(r.mean_final_sigma_kk),
            r.excluded_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot data: a `# name` line per series followed by whitespace-separated
/// `x y` pairs, series separated by two blank lines (gnuplot `index` blocks).
pub fn write_series(path: &Path, series: &[(&str, &[f64], &[f64])]) -> Result<()> {
    let mut out = String::new();
    for (i, (name, xs, ys)) in series.iter().enumerate() {
        if xs.len() != ys.len() {
            return Err(dims(format!("series {name}: {} x values, {} y values", xs.len(), ys.len())));
        }
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# {name}\n"));
        for (x, y) in xs.iter().zip(ys.iter()) {
            out.push_str(&format!("{} {}\n", fmt_f64(*x), fmt_f64(*y)));
        }
    }
    File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::filter_pass;
    use crate::smoother::smooth_pass;

    fn traj() -> Trajectory<f64> {
        Trajectory {
            states: vec![DVector::from_element(1, 0.1), DVector::from_element(1, 1.0 / 3.0)],
            observations: vec![DVector::from_element(1, -2.5), DVector::from_element(1, 1e-300)],
        }
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory(&path, &traj()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("k,x,y\n"));
        assert_eq!(read_trajectory(&path).unwrap(), traj());
    }

    #[test]
    fn smoother_file_has_lag_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let p = ModelParams::scalar(0.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let f = filter_pass(&p, &traj().observations).unwrap();
        let s = smooth_pass(&p, &f).unwrap();
        write_smoother(&path, &f, &s).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,x_pred,Sigma_pred,x_filt,Sigma_filt,nu,H,G,x_smooth,Sigma_smooth,Sigma_lag"
        );
        assert!(lines.next().unwrap().ends_with(','));
    }

    #[test]
    fn matrix_columns_are_indexed() {
        assert_eq!(names("S", 2, 2, false), ["S_0_0", "S_0_1", "S_1_0", "S_1_1"]);
        assert_eq!(names("x", 2, 1, true), ["x_0", "x_1"]);
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
