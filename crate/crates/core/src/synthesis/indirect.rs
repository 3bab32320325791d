use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{summarize, HrInterval};

/// A relative effect on the log-HR scale, either as a normal summary or as
/// posterior draws.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Normal { log_hr: f64, se: f64 },
    Draws(Vec<f64>),
}

/// `treatment` versus `comparator`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Contrast {
    pub treatment: String,
    pub comparator: String,
    pub effect: Effect,
}

impl Contrast {
    pub fn normal(treatment: &str, comparator: &str, log_hr: f64, se: f64) -> Self {
        Contrast {
            treatment: treatment.into(),
            comparator: comparator.into(),
            effect: Effect::Normal { log_hr, se },
        }
    }

    /// From a published `HR (lower, upper)`.
    pub fn from_hr(treatment: &str, comparator: &str, hr: HrInterval) -> Result<Self> {
        let (log_hr, se) = hr.to_log()?;
        Ok(Self::normal(treatment, comparator, log_hr, se))
    }

    pub fn draws(treatment: &str, comparator: &str, draws: Vec<f64>) -> Self {
        Contrast {
            treatment: treatment.into(),
            comparator: comparator.into(),
            effect: Effect::Draws(draws),
        }
    }

    /// The same contrast the other way round.
    pub fn flipped(&self) -> Contrast {
        let effect = match &self.effect {
            Effect::Normal { log_hr, se } => Effect::Normal {
                log_hr: -log_hr,
                se: *se,
            },
            Effect::Draws(d) => Effect::Draws(d.iter().map(|x| -x).collect()),
        };
        Contrast {
            treatment: self.comparator.clone(),
            comparator: self.treatment.clone(),
            effect,
        }
    }

    /// Mean and SD on the log scale.
    pub fn moments(&self) -> Result<(f64, f64)> {
        match &self.effect {
            Effect::Normal { log_hr, se } => Ok((*log_hr, *se)),
            Effect::Draws(d) => {
                let s = summarize(d)?;
                Ok((s.mean, s.sd))
            }
        }
    }

    /// Normal summaries use the symmetric interval; draws report
    /// exp(median) with the percentile interval.
    pub fn hr(&self) -> Result<HrInterval> {
        match &self.effect {
            Effect::Normal { log_hr, se } => Ok(HrInterval::from_log(*log_hr, *se)),
            Effect::Draws(d) => Ok(summarize(d)?.to_hr()),
        }
    }

    /// Orient so that `label` is the comparator.
    fn against(&self, label: &str) -> Option<Contrast> {
        if self.comparator == label {
            Some(self.clone())
        } else if self.treatment == label {
            Some(self.flipped())
        } else {
            None
        }
    }
}

/// Indirect comparison through a common comparator: `A vs B = A vs C - B vs
/// C`. Each input may be given in either orientation; the result is the
/// first input's non-shared treatment against the second's. Normal inputs
/// add variances; two sets of draws (equal in number) are differenced draw
/// by draw; a mix uses the draws' mean and SD.
///
/// ```
/// use evsyn::stats::HrInterval;
/// use evsyn::synthesis::{bucher_indirect, Contrast};
///
/// let dp_mp = Contrast::from_hr("D+P", "M+P", HrInterval::new(0.76, 0.62, 0.94))?;
/// let mp_p = Contrast::from_hr("M+P", "P", HrInterval::new(0.903, 0.751, 1.084))?;
/// let dp_p = bucher_indirect(&dp_mp, &mp_p)?;
/// assert_eq!((dp_p.treatment.as_str(), dp_p.comparator.as_str()), ("D+P", "P"));
/// assert_eq!(dp_p.hr()?.to_string(), "0.686 (0.520, 0.906)");
/// # Ok::<(), evsyn::Error>(())
/// ```
pub fn bucher_indirect(first: &Contrast, second: &Contrast) -> Result<Contrast> {
    let shared: Vec<&String> = [&first.treatment, &first.comparator]
        .into_iter()
        .filter(|l| **l == second.treatment || **l == second.comparator)
        .collect();
    // with both labels shared, the comparator of `first` is the common one
    let common = match shared.as_slice() {
        [] => {
            return Err(Error::LabelMismatch(format!(
                "{}/{} and {}/{} share no comparator",
                first.treatment, first.comparator, second.treatment, second.comparator
            )))
        }
        [one] => (*one).clone(),
        _ => first.comparator.clone(),
    };
    let a = first.against(&common).expect("shared label");
    let b = second.against(&common).expect("shared label");
    let effect = match (&a.effect, &b.effect) {
        (Effect::Draws(x), Effect::Draws(y)) => {
            if x.len() != y.len() {
                return Err(Error::input(format!(
                    "draw-wise comparison needs equal draw counts, got {} and {}",
                    x.len(),
                    y.len()
                )));
            }
            Effect::Draws(x.iter().zip(y).map(|(p, q)| p - q).collect())
        }
        _ => {
            let (ma, sa) = a.moments()?;
            let (mb, sb) = b.moments()?;
            Effect::Normal {
                log_hr: ma - mb,
                se: (sa * sa + sb * sb).sqrt(),
            }
        }
    };
    Ok(Contrast {
        treatment: a.treatment,
        comparator: b.treatment,
        effect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_give_unit_hr() {
        let x = Contrast::normal("A", "C", 0.3, 0.2);
        let r = bucher_indirect(&x, &x).unwrap();
        assert_eq!(r.treatment, "A");
        assert_eq!(r.comparator, "A");
        let (m, s) = r.moments().unwrap();
        assert_eq!(m, 0.0);
        assert!((s * s - 2.0 * 0.04).abs() < 1e-15);
    }

    #[test]
    fn orientation_is_aligned() {
        let ac = Contrast::normal("A", "C", 0.5, 0.1);
        let bc = Contrast::normal("B", "C", 0.2, 0.1);
        let r1 = bucher_indirect(&ac, &bc).unwrap();
        let r2 = bucher_indirect(&ac, &bc.flipped()).unwrap();
        let r3 = bucher_indirect(&ac.flipped(), &bc).unwrap();
        assert_eq!(r1, r2);
        assert!((r1.moments().unwrap().0 - 0.3).abs() < 1e-15);
        assert_eq!(r3.treatment, "A");
        assert_eq!(r3.comparator, "B");
    }

    #[test]
    fn unrelated_contrasts_rejected() {
        let ac = Contrast::normal("A", "C", 0.5, 0.1);
        let bd = Contrast::normal("B", "D", 0.2, 0.1);
        assert!(matches!(
            bucher_indirect(&ac, &bd),
            Err(Error::LabelMismatch(_))
        ));
    }

    #[test]
    fn draw_wise_difference() {
        let ac = Contrast::draws("A", "C", vec![1.0, 2.0, 3.0]);
        let bc = Contrast::draws("B", "C", vec![0.5, 0.5, 0.5]);
        match bucher_indirect(&ac, &bc).unwrap().effect {
            Effect::Draws(d) => assert_eq!(d, vec![0.5, 1.5, 2.5]),
            _ => panic!(),
        }
        let short = Contrast::draws("B", "C", vec![0.5]);
        assert!(bucher_indirect(&ac, &short).is_err());
    }
}
