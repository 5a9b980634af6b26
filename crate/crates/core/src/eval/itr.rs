use crate::error::{Error, Result};

/// Bits per selection for alphabet `a` at accuracy `p`.
pub fn itr(a: usize, p: f64) -> Result<f64> {
    if a < 2 {
        return Err(Error::Domain(format!("alphabet size {a} < 2")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("accuracy {p} outside [0, 1]")));
    }
    let af = a as f64;
    let hit = if p > 0.0 { p * p.log2() } else { 0.0 };
    let miss = if p < 1.0 {
        (1.0 - p) * ((1.0 - p) / (af - 1.0)).log2()
    } else {
        0.0
    };
    Ok(af.log2() + hit + miss)
}

/// Bits per sequence: [`itr`] over the mean stop sequence.
pub fn itr_per_sequence(a: usize, p: f64, n_tau: f64) -> Result<f64> {
    if !(n_tau >= 1.0) {
        return Err(Error::Domain(format!("mean sequences {n_tau} < 1")));
    }
    Ok(itr(a, p)? / n_tau)
}
