use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|ad − fd| / max(1e-8, |ad| + |fd|)` over all entries.
    pub max_rel_error: f64,
    /// Parameter index and flat entry index of the worst entry.
    pub worst: (usize, usize),
    pub per_param: Vec<f64>,
    /// `‖ad − fd‖ / max(1e-12, ‖ad‖ + ‖fd‖)` for each parameter tensor.
    pub per_param_norm: Vec<f64>,
    /// Largest of `per_param_norm`.
    pub max_norm_error: f64,
    /// Index of the parameter with the largest norm-wise error.
    pub worst_param: usize,
    pub entries_checked: usize,
}

fn eval<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out).item();
    if !v.is_finite() {
        return Err(Error::Numerical(format!("non-finite function value {v}")));
    }
    Ok(v)
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `h` for every entry of every parameter.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).item().is_finite() {
        return Err(Error::Numerical("non-finite function value".into()));
    }
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
        .collect();
    drop(tape);

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        per_param: vec![0.0; params.len()],
        per_param_norm: vec![0.0; params.len()],
        max_norm_error: 0.0,
        worst_param: 0,
        entries_checked: 0,
    };
    for p in 0..params.len() {
        let (mut diff2, mut ad2, mut fd2) = (0.0, 0.0, 0.0);
        for e in 0..params[p].len() {
            let orig = params[p].data()[e];
            work[p].data_mut()[e] = orig + h;
            let fp = eval(&f, &work)?;
            work[p].data_mut()[e] = orig - h;
            let fm = eval(&f, &work)?;
            work[p].data_mut()[e] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let ad = analytic[p].data()[e];
            diff2 += (ad - fd) * (ad - fd);
            ad2 += ad * ad;
            fd2 += fd * fd;
            let rel = (ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-8);
            report.entries_checked += 1;
            if rel > report.per_param[p] {
                report.per_param[p] = rel;
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (p, e);
            }
        }
        let norm = diff2.sqrt() / (ad2.sqrt() + fd2.sqrt()).max(1e-12);
        report.per_param_norm[p] = norm;
        if norm > report.max_norm_error {
            report.max_norm_error = norm;
            report.worst_param = p;
        }
    }
    Ok(report)
}
