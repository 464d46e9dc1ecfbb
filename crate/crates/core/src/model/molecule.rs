use crate::error::{invalid, Error, Result};
use crate::fem::{ElementField, ElementPoint};
use crate::mesh::{geometry, BoxDomain};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nucleus {
    pub charge: f64,
    pub position: Point,
}

/// Nuclei (atomic units) and the electron count.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    nuclei: Vec<Nucleus>,
    electrons: usize,
}

impl Molecule {
    pub fn new(nuclei: Vec<Nucleus>, electrons: usize) -> Result<Self> {
        if nuclei.is_empty() {
            return invalid("a molecule needs at least one nucleus");
        }
        if let Some(n) = nuclei.iter().find(|n| !(n.charge > 0.0) || n.position.iter().any(|c| !c.is_finite())) {
            return invalid(format!("nucleus {n:?} must have positive charge and finite position"));
        }
        if electrons == 0 {
            return invalid("electron count must be at least 1");
        }
        Ok(Self { nuclei, electrons })
    }

    pub fn hydrogen() -> Self {
        Self::new(vec![Nucleus { charge: 1.0, position: [0.0; 3] }], 1).expect("valid")
    }

    pub fn helium() -> Self {
        Self::new(vec![Nucleus { charge: 2.0, position: [0.0; 3] }], 2).expect("valid")
    }

    /// Lines `Z x y z` for nuclei and a single integer line for the electron
    /// count. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut nuclei = Vec::new();
        let mut electrons = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.len() {
                1 => {
                    if electrons.is_some() {
                        return Err(parse_err("electron count given twice".into()));
                    }
                    electrons = Some(
                        tokens[0].parse::<usize>().map_err(|_| parse_err(format!("bad electron count `{}`", tokens[0])))?,
                    );
                }
                4 => {
                    let v: Vec<f64> = tokens
                        .iter()
                        .map(|t| t.parse::<f64>().map_err(|_| parse_err(format!("bad number `{t}`"))))
                        .collect::<Result<_>>()?;
                    nuclei.push(Nucleus { charge: v[0], position: [v[1], v[2], v[3]] });
                }
                n => return Err(parse_err(format!("expected `Z x y z` or an electron count, found {n} fields"))),
            }
        }
        let electrons = electrons.ok_or(Error::Parse { line: text.lines().count(), message: "missing electron count".into() })?;
        Self::new(nuclei, electrons)
    }

    pub fn nuclei(&self) -> &[Nucleus] {
        &self.nuclei
    }

    pub fn electrons(&self) -> usize {
        self.electrons
    }

    /// `sum_{k<l} Z_k Z_l / |R_k - R_l|`
    pub fn nuclear_repulsion(&self) -> f64 {
        let mut e = 0.0;
        for (k, a) in self.nuclei.iter().enumerate() {
            for b in &self.nuclei[k + 1..] {
                e += a.charge * b.charge / geometry::distance(&a.position, &b.position);
            }
        }
        e
    }

    pub fn check_inside(&self, domain: &BoxDomain) -> Result<()> {
        match self.nuclei.iter().find(|n| !domain.contains(&n.position) || domain.on_boundary(&n.position)) {
            Some(n) => invalid(format!("nucleus at {:?} is not inside the box", n.position)),
            None => Ok(()),
        }
    }
}

/// `V_ext(x) = -sum_k Z_k / sqrt(|x - R_k|^2 + eps^2)`.
#[derive(Debug, Clone)]
pub struct ExternalPotential {
    nuclei: Vec<Nucleus>,
    smoothing: f64,
}

impl ExternalPotential {
    pub fn new(molecule: &Molecule, smoothing: f64) -> Result<Self> {
        if !(smoothing >= 0.0) || !smoothing.is_finite() {
            return invalid(format!("smoothing {smoothing} must be a finite nonnegative number"));
        }
        Ok(Self { nuclei: molecule.nuclei.clone(), smoothing })
    }

    fn raw(&self, x: &Point) -> f64 {
        let e2 = self.smoothing * self.smoothing;
        self.nuclei
            .iter()
            .map(|n| {
                let d = geometry::sub(x, &n.position);
                -n.charge / (geometry::dot(&d, &d) + e2).sqrt()
            })
            .sum()
    }

    /// Point value; a bare nucleus position is a singular point.
    pub fn evaluate(&self, x: &Point) -> Result<f64> {
        if self.smoothing == 0.0 {
            if let Some(n) = self.nuclei.iter().find(|n| n.position == *x) {
                return Err(Error::SingularPoint(n.position));
            }
        }
        Ok(self.raw(x))
    }
}

impl ElementField for ExternalPotential {
    fn value(&self, at: &ElementPoint<'_>) -> f64 {
        self.raw(&at.x)
    }

    fn singular_points(&self) -> Vec<Point> {
        // the smoothed potential is still steep near each nucleus
        self.nuclei.iter().map(|n| n.position).collect()
    }
}
