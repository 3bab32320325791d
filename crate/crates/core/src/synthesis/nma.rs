use std::collections::BTreeSet;

use super::indirect::Contrast;
use super::pairwise::ReConfig;
use super::study::{Outcome, StudyOutcome};
use crate::error::{Error, Result};
use crate::mcmc::{diagnose, run_chain, ChainOutput, Diagnostics, ModelGraph, ParamId};

/// Treatments and the two-arm contrasts that connect them.
#[derive(Clone, Debug)]
pub struct ContrastGraph {
    pub treatments: Vec<String>,
    pub edges: Vec<StudyOutcome>,
}

impl ContrastGraph {
    /// Complete rows for one outcome.
    pub fn new(rows: &[StudyOutcome], outcome: Outcome) -> Result<Self> {
        let edges: Vec<StudyOutcome> = rows
            .iter()
            .filter(|r| r.outcome == outcome && r.observed().is_some())
            .cloned()
            .collect();
        if edges.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no complete {outcome} contrasts"
            )));
        }
        let treatments: BTreeSet<String> = edges
            .iter()
            .flat_map(|e| [e.treatment.clone(), e.comparator.clone()])
            .collect();
        Ok(ContrastGraph {
            treatments: treatments.into_iter().collect(),
            edges,
        })
    }

    fn index(&self, label: &str) -> Option<usize> {
        self.treatments.iter().position(|t| t == label)
    }

    /// Connected components as sorted label lists.
    pub fn components(&self) -> Vec<Vec<String>> {
        let n = self.treatments.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for e in &self.edges {
            let a = find(&mut parent, self.index(&e.treatment).expect("label"));
            let b = find(&mut parent, self.index(&e.comparator).expect("label"));
            parent[a] = b;
        }
        let mut groups: Vec<Vec<String>> = vec![];
        let mut root_of: Vec<(usize, usize)> = vec![];
        for i in 0..n {
            let r = find(&mut parent, i);
            match root_of.iter().find(|(root, _)| *root == r) {
                Some(&(_, g)) => groups[g].push(self.treatments[i].clone()),
                None => {
                    root_of.push((r, groups.len()));
                    groups.push(vec![self.treatments[i].clone()]);
                }
            }
        }
        groups
    }
}

#[derive(Clone, Debug)]
pub struct NmaResult {
    pub reference: String,
    pub treatments: Vec<String>,
    pub output: ChainOutput,
    pub diagnostics: Option<Diagnostics>,
}

impl NmaResult {
    fn basic(&self, label: &str) -> Result<Option<Vec<f64>>> {
        if label == self.reference {
            return Ok(None);
        }
        if !self.treatments.iter().any(|t| t == label) {
            return Err(Error::LabelMismatch(format!(
                "treatment `{label}` is not in the network"
            )));
        }
        Ok(Some(self.output.draws(&format!("d[{label}]"))?))
    }

    /// Posterior draws of `a` versus `b`, derived from the basic parameters.
    pub fn contrast(&self, a: &str, b: &str) -> Result<Contrast> {
        let da = self.basic(a)?;
        let db = self.basic(b)?;
        let n = self.output.draws("tau")?.len();
        let zero = vec![0.0; n];
        let (da, db) = (da.unwrap_or_else(|| zero.clone()), db.unwrap_or(zero));
        Ok(Contrast::draws(
            a,
            b,
            da.iter().zip(&db).map(|(x, y)| x - y).collect(),
        ))
    }

    /// Every pair, each treatment against those listed after it.
    pub fn all_contrasts(&self) -> Result<Vec<Contrast>> {
        let mut out = vec![];
        for (i, a) in self.treatments.iter().enumerate() {
            for b in &self.treatments[i + 1..] {
                out.push(self.contrast(a, b)?);
            }
        }
        Ok(out)
    }
}

/// Contrast-based random-effects network meta-analysis under consistency
/// with a common between-study SD. Basic parameters `d[t]` are effects
/// versus `reference` (default: first treatment alphabetically); study `i`
/// comparing `t` with `c` has `y_i ~ N(d[t] - d[c], se_i^2 + tau^2)`, the
/// study-specific effects being integrated out as in
/// [`random_effects_ma`](super::random_effects_ma). `config.mean_prior`
/// is the prior of every basic parameter; a point-mass `tau_prior` at 0
/// gives the fixed-effect network.
pub fn nma_fit(
    graph: &ContrastGraph,
    reference: Option<&str>,
    config: &ReConfig,
) -> Result<NmaResult> {
    let comps = graph.components();
    if comps.len() > 1 {
        let names: Vec<String> = comps
            .iter()
            .map(|c| format!("{{{}}}", c.join(", ")))
            .collect();
        return Err(Error::Disconnected(names.join(" | ")));
    }
    let reference = reference.unwrap_or(&graph.treatments[0]).to_string();
    if graph.index(&reference).is_none() {
        return Err(Error::LabelMismatch(format!(
            "reference `{reference}` is not in the network"
        )));
    }
    let mut m = ModelGraph::new();
    let mut d: Vec<Option<ParamId>> = vec![];
    for t in &graph.treatments {
        if *t == reference {
            d.push(None);
        } else {
            d.push(Some(m.param(&format!("d[{t}]"), config.mean_prior)?));
        }
    }
    let tau = m.param("tau", config.tau_prior)?;
    for e in &graph.edges {
        let (y, se) = e.observed().expect("complete edges only");
        let dt = d[graph.index(&e.treatment).expect("label")];
        let dc = d[graph.index(&e.comparator).expect("label")];
        let linear: Vec<ParamId> = [dt, dc].into_iter().flatten().collect();
        m.normal_factor(
            move |t| y - dt.map_or(0.0, |p| p.get(t)) + dc.map_or(0.0, |p| p.get(t)),
            move |t| (se * se + tau.get(t).powi(2)).sqrt(),
            &linear,
            &[tau],
        )?;
    }
    let output = run_chain(&m, &config.chain)?;
    let diagnostics = diagnose(&output).ok();
    Ok(NmaResult {
        reference,
        treatments: graph.treatments.clone(),
        output,
        diagnostics,
    })
}
