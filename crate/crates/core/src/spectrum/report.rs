//! Key-value text form of [`SpectralReport`].

use super::SpectralReport;
use crate::error::{Error, Result};
use crate::grid::{GridKind, RadialGrid};

const MAGIC: &str = "# instablab-spectrum";

impl SpectralReport {
    pub fn to_text(&self) -> String {
        let history: Vec<String> = self.refinement_history.iter().map(|(n, l)| format!("{n}:{l:e}")).collect();
        let sigma = self.sigma_sq.map_or_else(|| "none".to_string(), |s| format!("{s:e}"));
        let mut out = format!(
            "{MAGIC}\nn = {}\neigenvalue = {:e}\ndiscrete_eigenvalue = {:e}\nsigma_sq = {sigma}\nchi_l1 = {:e}\nchi_l2 = {:e}\ntruncation_radius = {:e}\neigen_residual = {:e}\ngrid = {}\nrefinement_history = {}\nr chi\n",
            self.n,
            self.eigenvalue,
            self.discrete_eigenvalue,
            self.chi_l1,
            self.chi_l2,
            self.truncation_radius,
            self.eigen_residual,
            serde_json::to_string(&self.grid.kind()).unwrap(),
            history.join(","),
        );
        for (r, c) in self.grid.nodes().iter().zip(&self.chi) {
            out.push_str(&format!("{r:e} {c:e}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = crate::strip_preamble(text).lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Parse("missing spectrum header".into()));
        }
        let mut fields = std::collections::BTreeMap::new();
        for line in lines.by_ref() {
            if line == "r chi" {
                break;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Parse(format!("bad header line `{line}`")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let take = |k: &str| fields.get(k).cloned().ok_or_else(|| Error::Parse(format!("missing key `{k}`")));
        let num = |k: &str| -> Result<f64> { take(k)?.parse().map_err(|e| Error::Parse(format!("{k}: {e}"))) };
        let n: u32 = take("n")?.parse().map_err(|e| Error::Parse(format!("n: {e}")))?;
        let sigma_sq = match take("sigma_sq")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|e| Error::Parse(format!("sigma_sq: {e}")))?),
        };
        let kind: GridKind =
            serde_json::from_str(&take("grid")?).map_err(|e| Error::Parse(format!("grid: {e}")))?;
        let history_text = take("refinement_history")?;
        let refinement_history = history_text
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|item| {
                let (a, b) = item.split_once(':').ok_or_else(|| Error::Parse(format!("history item `{item}`")))?;
                Ok((
                    a.parse().map_err(|e| Error::Parse(format!("history: {e}")))?,
                    b.parse().map_err(|e| Error::Parse(format!("history: {e}")))?,
                ))
            })
            .collect::<Result<Vec<(usize, f64)>>>()?;
        let (mut r, mut chi) = (Vec::new(), Vec::new());
        for line in lines {
            let mut it = line.split_whitespace();
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("bad table row `{line}`")));
            };
            r.push(a.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
            chi.push(b.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
        }
        Ok(SpectralReport {
            n,
            eigenvalue: num("eigenvalue")?,
            discrete_eigenvalue: num("discrete_eigenvalue")?,
            sigma_sq,
            grid: RadialGrid::from_nodes(kind, r)?,
            chi,
            chi_l1: num("chi_l1")?,
            chi_l2: num("chi_l2")?,
            truncation_radius: num("truncation_radius")?,
            eigen_residual: num("eigen_residual")?,
            refinement_history,
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::grid::RadialGrid;
    use crate::problem::Potential;
    use crate::spectrum::{ground_state, LinearizedOperator, SpectralReport};

    #[test]
    fn round_trip() {
        let grid = RadialGrid::stretched(30.0, 257, 0.02).unwrap();
        let op = LinearizedOperator::schrodinger(3, Potential::AlgebraicDecay { c: -10.0, l: 3.0 }, &grid).unwrap();
        let rep = ground_state(&op).unwrap();
        assert!(rep.sigma_sq.is_some());
        let back = SpectralReport::from_text(&rep.to_text()).unwrap();
        assert_eq!(back, rep);
        assert!(SpectralReport::from_text("nonsense").is_err());
    }
}
