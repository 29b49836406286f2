//! Genome representation: proteins with three tags in `[0,1]`, plus the
//! dynamics constants `beta` and `delta`.
//!
//! Proteins are stored in a fixed order (inputs, then outputs, then
//! regulatory) so that a protein's index doubles as its position in the
//! concentration vector and in the flat parameter vector used by the
//! optimizer.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GenomeError {
    #[error("protein tag {tag} out of range: {value} not in [0,1]")]
    TagOutOfRange { tag: &'static str, value: f64 },
    #[error("beta/delta must be finite and positive, got beta={beta} delta={delta}")]
    BadDynamicsConstants { beta: f64, delta: f64 },
    #[error("proteins must be ordered input, output, regulatory (violation at index {0})")]
    BadProteinOrder(usize),
    #[error("genome parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProteinKind {
    Input,
    Output,
    Regulatory,
}

impl fmt::Display for ProteinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProteinKind::Input => "input",
            ProteinKind::Output => "output",
            ProteinKind::Regulatory => "regulatory",
        };
        f.write_str(s)
    }
}

impl FromStr for ProteinKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "input" => Ok(ProteinKind::Input),
            "output" => Ok(ProteinKind::Output),
            "regulatory" => Ok(ProteinKind::Regulatory),
            other => Err(format!("unknown protein kind `{other}`")),
        }
    }
}

/// A single artificial protein: identifier, enhancer and inhibitor tags,
/// each in `[0,1]`, plus an immutable kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protein {
    pub id: f64,
    pub enh: f64,
    pub inh: f64,
    pub kind: ProteinKind,
}

impl Protein {
    pub fn new(kind: ProteinKind, id: f64, enh: f64, inh: f64) -> Result<Self, GenomeError> {
        for (tag, value) in [("id", id), ("enh", enh), ("inh", inh)] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(GenomeError::TagOutOfRange { tag, value });
            }
        }
        Ok(Protein { id, enh, inh, kind })
    }
}

/// A GRN genome: the ordered protein list and the two dynamics constants.
///
/// Every scalar in the genome (3 tags per protein, beta, delta) is both
/// evolvable and learnable. The flat parameter layout is
/// `[id_0..id_{N-1}, enh_0..enh_{N-1}, inh_0..inh_{N-1}, beta, delta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    proteins: Vec<Protein>,
    pub beta: f64,
    pub delta: f64,
    n_in: usize,
    n_out: usize,
    n_reg: usize,
}

impl Genome {
    pub fn new(proteins: Vec<Protein>, beta: f64, delta: f64) -> Result<Self, GenomeError> {
        if !beta.is_finite() || !delta.is_finite() || beta <= 0.0 || delta <= 0.0 {
            return Err(GenomeError::BadDynamicsConstants { beta, delta });
        }
        // Kinds must appear as contiguous input, output, regulatory runs.
        let mut phase = 0u8;
        let (mut n_in, mut n_out, mut n_reg) = (0usize, 0usize, 0usize);
        for (i, p) in proteins.iter().enumerate() {
            let k = match p.kind {
                ProteinKind::Input => 0,
                ProteinKind::Output => 1,
                ProteinKind::Regulatory => 2,
            };
            if k < phase {
                return Err(GenomeError::BadProteinOrder(i));
            }
            phase = k;
            match p.kind {
                ProteinKind::Input => n_in += 1,
                ProteinKind::Output => n_out += 1,
                ProteinKind::Regulatory => n_reg += 1,
            }
        }
        Ok(Genome { proteins, beta, delta, n_in, n_out, n_reg })
    }

    pub fn proteins(&self) -> &[Protein] {
        &self.proteins
    }

    pub fn n(&self) -> usize {
        self.proteins.len()
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn n_reg(&self) -> usize {
        self.n_reg
    }

    /// Number of non-input proteins (the normalized part of the state).
    pub fn n_dynamic(&self) -> usize {
        self.n_out + self.n_reg
    }

    pub fn is_input(&self, i: usize) -> bool {
        i < self.n_in
    }

    pub fn is_output(&self, i: usize) -> bool {
        i >= self.n_in && i < self.n_in + self.n_out
    }

    pub fn push_regulatory(&mut self, p: Protein) {
        debug_assert_eq!(p.kind, ProteinKind::Regulatory);
        self.proteins.push(p);
        self.n_reg += 1;
    }

    /// Removes the `k`-th regulatory protein (0-based among regulatory).
    pub fn remove_regulatory(&mut self, k: usize) {
        assert!(k < self.n_reg);
        self.proteins.remove(self.n_in + self.n_out + k);
        self.n_reg -= 1;
    }

    /// Total learnable scalar count: three tags per protein plus beta and delta.
    pub fn n_params(&self) -> usize {
        3 * self.n() + 2
    }

    pub fn param(&self, k: usize) -> f64 {
        let n = self.n();
        match k {
            _ if k < n => self.proteins[k].id,
            _ if k < 2 * n => self.proteins[k - n].enh,
            _ if k < 3 * n => self.proteins[k - 2 * n].inh,
            _ if k == 3 * n => self.beta,
            _ if k == 3 * n + 1 => self.delta,
            _ => panic!("parameter index {k} out of range"),
        }
    }

    /// Sets a flat parameter without any bounds enforcement. Projection into
    /// the box constraints is the optimizer's job.
    pub fn set_param(&mut self, k: usize, value: f64) {
        let n = self.n();
        match k {
            _ if k < n => self.proteins[k].id = value,
            _ if k < 2 * n => self.proteins[k - n].enh = value,
            _ if k < 3 * n => self.proteins[k - 2 * n].inh = value,
            _ if k == 3 * n => self.beta = value,
            _ if k == 3 * n + 1 => self.delta = value,
            _ => panic!("parameter index {k} out of range"),
        }
    }

    /// Serializes to the line-oriented text format. Reals are printed with 17
    /// significant digits so the round trip is exact.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "grn v1 {} {} {} {:.16e} {:.16e}\n",
            self.n_in, self.n_out, self.n_reg, self.beta, self.delta
        );
        for p in &self.proteins {
            out.push_str(&format!(
                "{} {:.16e} {:.16e} {:.16e}\n",
                p.kind, p.id, p.enh, p.inh
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GenomeError> {
        let parse_err = |line: usize, message: String| GenomeError::Parse { line, message };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty genome file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "grn" || fields[1] != "v1" {
            return Err(parse_err(1, format!("bad header `{header}`")));
        }
        let counts: Vec<usize> = fields[2..5]
            .iter()
            .map(|s| s.parse().map_err(|e| parse_err(1, format!("bad count `{s}`: {e}"))))
            .collect::<Result<_, _>>()?;
        let beta: f64 = fields[5]
            .parse()
            .map_err(|e| parse_err(1, format!("bad beta: {e}")))?;
        let delta: f64 = fields[6]
            .parse()
            .map_err(|e| parse_err(1, format!("bad delta: {e}")))?;
        let expected = counts[0] + counts[1] + counts[2];
        let mut proteins = Vec::with_capacity(expected);
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(parse_err(lineno, format!("expected 4 fields, got {}", fields.len())));
            }
            let kind: ProteinKind = fields[0]
                .parse()
                .map_err(|e| parse_err(lineno, e))?;
            let tags: Vec<f64> = fields[1..4]
                .iter()
                .map(|s| s.parse().map_err(|e| parse_err(lineno, format!("bad tag `{s}`: {e}"))))
                .collect::<Result<_, _>>()?;
            proteins.push(
                Protein::new(kind, tags[0], tags[1], tags[2])
                    .map_err(|e| parse_err(lineno, e.to_string()))?,
            );
        }
        if proteins.len() != expected {
            return Err(parse_err(
                0,
                format!("header promises {expected} proteins, found {}", proteins.len()),
            ));
        }
        let genome = Genome::new(proteins, beta, delta)
            .map_err(|e| parse_err(0, e.to_string()))?;
        if genome.n_in != counts[0] || genome.n_out != counts[1] || genome.n_reg != counts[2] {
            return Err(parse_err(0, "header counts disagree with protein kinds".into()));
        }
        Ok(genome)
    }
}
