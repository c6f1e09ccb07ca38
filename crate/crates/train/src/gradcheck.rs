//! Central-difference checks of reverse-mode gradients.

use able_core::operator::AbleNetwork;
use able_core::params::{Bound, ParamStore};
use able_core::rng::stream;
use able_core::{Dtype, Tape, Tensor, Var};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::loss::relative_l2_tape;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradEntry {
    pub param: String,
    pub index: usize,
    pub imag: bool,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub h: f64,
    /// Differences below this are attributed to rounding in the quotient.
    pub noise_floor: f64,
    pub max_rel_error: f64,
    pub entries: Vec<GradEntry>,
}

impl GradCheckReport {
    pub fn entries_matching<'a>(&'a self, pat: &'a str) -> impl Iterator<Item = &'a GradEntry> + 'a {
        self.entries.iter().filter(move |e| e.param.contains(pat))
    }
}

fn component(t: &Tensor, j: usize, imag: bool) -> Result<f64> {
    Ok(match t.dtype() {
        Dtype::Real => t.as_real()?[j],
        Dtype::Complex => {
            let z = t.as_complex()?[j];
            if imag {
                z.im
            } else {
                z.re
            }
        }
    })
}

/// Check `n_params` scalar entries chosen with `seed`. Every third pick is
/// drawn from parameters whose name satisfies `prefer`, when any do.
pub fn gradient_check_with(
    store: &ParamStore,
    loss: impl Fn(&mut Tape, &Bound) -> Result<Var>,
    n_params: usize,
    h: f64,
    seed: u64,
    prefer: impl Fn(&str) -> bool,
) -> Result<GradCheckReport> {
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::inference();
        let bound = s.bind(&mut tape);
        let l = loss(&mut tape, &bound)?;
        Ok(tape.value(l).item()?)
    };
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let l = loss(&mut tape, &bound)?;
    let l0 = tape.value(l).item()?;
    let mut grads = tape.backward(l)?;
    let grads = bound.gradients(store, &mut grads);

    // the quotient (L(θ+h) − L(θ−h))/2h carries about 10·ε·|L|/h of rounding
    let noise_floor = 10.0 * f64::EPSILON * l0.abs().max(1.0) / h;
    let preferred: Vec<usize> = (0..store.len()).filter(|&i| prefer(&store.params()[i].name)).collect();
    let mut rng = stream(seed, "gradcheck");
    let mut entries = Vec::with_capacity(n_params);
    let mut worst: f64 = 0.0;
    for k in 0..n_params {
        let pi = if k % 3 == 0 && !preferred.is_empty() {
            preferred[rng.gen_range(0..preferred.len())]
        } else {
            rng.gen_range(0..store.len())
        };
        let p = &store.params()[pi];
        if p.value.is_empty() {
            continue;
        }
        let j = rng.gen_range(0..p.value.len());
        let imag = p.value.dtype() == Dtype::Complex && rng.gen_bool(0.5);
        let bump = |s: f64| -> Result<f64> {
            let mut st = store.clone();
            let v = &mut st.params_mut()[pi].value;
            match v.dtype() {
                Dtype::Real => v.as_real_mut()?[j] += s,
                Dtype::Complex => v.as_complex_mut()?[j] += if imag { Complex64::new(0.0, s) } else { Complex64::new(s, 0.0) },
            }
            eval(&st)
        };
        let numeric = (bump(h)? - bump(-h)?) / (2.0 * h);
        let analytic = component(&grads[pi], j, imag)?;
        let scale = analytic.abs().max(numeric.abs());
        let rel_error = if scale == 0.0 {
            0.0
        } else {
            ((analytic - numeric).abs() - noise_floor).max(0.0) / scale
        };
        worst = worst.max(rel_error);
        entries.push(GradEntry {
            param: p.name.clone(),
            index: j,
            imag,
            analytic,
            numeric,
            rel_error,
        });
    }
    Ok(GradCheckReport {
        loss: l0,
        h,
        noise_floor,
        max_rel_error: worst,
        entries,
    })
}

/// Relative-L2 loss of `net` on one `(input, target)` batch; a third of the
/// picks come from the density networks.
pub fn gradient_check(
    net: &AbleNetwork,
    store: &ParamStore,
    input: &Tensor,
    target: &Tensor,
    n_params: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    gradient_check_with(
        store,
        |tape, bound| {
            let x = tape.constant(input.clone());
            let y = net.forward(tape, bound, x)?;
            Ok(relative_l2_tape(tape, y, target)?.1)
        },
        n_params,
        h,
        seed,
        |name| name.contains(".density."),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use able_core::params::ParamGroup;

    #[test]
    fn linear_model_quadratic_loss() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_fn(&[3, 2], |i| 0.3 * i as f64 - 0.5), ParamGroup::Dense);
        let x = Tensor::from_fn(&[4, 3], |i| (i as f64).sin());
        let report = gradient_check_with(
            &store,
            |tape, bound| {
                let xv = tape.constant(x.clone());
                let y = tape.matmul(xv, bound.var(w))?;
                let s = tape.batch_sq_norm(y)?;
                Ok(tape.sum(s)?)
            },
            6,
            1e-6,
            0,
            |_| false,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.entries.len(), 6);
    }
}
