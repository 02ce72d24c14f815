//! Geometric configuration: the blown-up points `Z_k = V(x_0, l_k)` on the
//! line at infinity, bad primes, character classification and the point
//! count over finite fields.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use num_bigint::BigInt;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::arith::{is_prime, prime_factors, prime_factors_u64};
use crate::error::{Error, Result};

/// `l(x) = u x_1 + v x_2` with coprime coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinearForm {
    pub u: i64,
    pub v: i64,
}

impl LinearForm {
    /// Normalizes the sign so the first nonzero coefficient is positive.
    pub fn new(u: i64, v: i64) -> Result<Self> {
        if u == 0 && v == 0 {
            return Err(Error::Config("linear form (0, 0) defines no point".into()));
        }
        if u.gcd(&v) != 1 {
            return Err(Error::NonCoprimeForm { u, v });
        }
        let flip = u < 0 || (u == 0 && v < 0);
        Ok(if flip { LinearForm { u: -u, v: -v } } else { LinearForm { u, v } })
    }

    pub fn eval(&self, x1: i128, x2: i128) -> i128 {
        self.u as i128 * x1 + self.v as i128 * x2
    }

    pub fn eval_big(&self, x1: &BigInt, x2: &BigInt) -> BigInt {
        BigInt::from(self.u) * x1 + BigInt::from(self.v) * x2
    }

    /// `u_j v_k - u_k v_j`.
    pub fn det(&self, other: &LinearForm) -> i128 {
        self.u as i128 * other.v as i128 - other.u as i128 * self.v as i128
    }

    pub fn det_vec(&self, a: (i64, i64)) -> i128 {
        self.u as i128 * a.1 as i128 - a.0 as i128 * self.v as i128
    }

    /// `|u| + |v|`.
    pub fn l1(&self) -> i128 {
        (self.u as i128).abs() + (self.v as i128).abs()
    }
}

impl fmt::Display for LinearForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

/// A validated configuration of `r` rational points on the line at infinity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SurfaceConfig {
    name: String,
    forms: Vec<LinearForm>,
    bad_primes: BTreeSet<u64>,
}

/// The on-disk configuration document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub name: String,
    pub forms: Vec<[i64; 2]>,
}

impl SurfaceConfig {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn forms(&self) -> &[LinearForm] {
        &self.forms
    }

    pub fn form(&self, k: usize) -> &LinearForm {
        &self.forms[k - 1]
    }

    pub fn r(&self) -> usize {
        self.forms.len()
    }

    pub fn picard_rank(&self) -> usize {
        self.forms.len() + 1
    }

    pub fn bad_primes(&self) -> &BTreeSet<u64> {
        &self.bad_primes
    }

    pub fn is_good(&self, p: u64) -> bool {
        !self.bad_primes.contains(&p)
    }

    /// Same surface with the forms permuted.
    pub fn permuted(&self, order: &[usize]) -> Result<SurfaceConfig> {
        let forms: Vec<(i64, i64)> = order.iter().map(|&i| (self.forms[i].u, self.forms[i].v)).collect();
        validate_config(&self.name, &forms)
    }

    pub fn from_document(doc: &ConfigDocument) -> Result<Self> {
        let forms: Vec<(i64, i64)> = doc.forms.iter().map(|f| (f[0], f[1])).collect();
        validate_config(&doc.name, &forms)
    }

    /// Parses a TOML document (`name = ...`, `forms = [[u, v], ...]`); JSON
    /// is accepted as well.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: ConfigDocument = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        };
        Self::from_document(&doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_document(&self) -> ConfigDocument {
        ConfigDocument { name: self.name.clone(), forms: self.forms.iter().map(|f| [f.u, f.v]).collect() }
    }

    /// Largest `|det(l_j, l_k)|` over pairs; 1 when `r < 2`.
    pub fn max_det(&self) -> i128 {
        let mut m = 1;
        for j in 0..self.forms.len() {
            for k in j + 1..self.forms.len() {
                m = m.max(self.forms[j].det(&self.forms[k]).abs());
            }
        }
        m
    }
}

pub fn validate_config(name: &str, forms: &[(i64, i64)]) -> Result<SurfaceConfig> {
    let mut out: Vec<LinearForm> = Vec::with_capacity(forms.len());
    for &(u, v) in forms {
        out.push(LinearForm::new(u, v)?);
    }
    let mut bad = BTreeSet::new();
    for j in 0..out.len() {
        for k in j + 1..out.len() {
            let d = out[j].det(&out[k]);
            if d == 0 {
                return Err(Error::ProportionalForms { first: forms[j], second: forms[k] });
            }
            bad.extend(prime_factors_u64(d.unsigned_abs() as u64));
        }
    }
    Ok(SurfaceConfig { name: name.to_string(), forms: out, bad_primes: bad })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CharacterKind {
    Trivial,
    /// Proportional to `l_k` (1-based).
    Special(usize),
    Generic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CharacterClass {
    pub a: (i64, i64),
    pub kind: CharacterKind,
    /// Primes where the closed forms do not apply (includes the bad primes of
    /// the configuration and every prime dividing `a`).
    pub bad_set: BTreeSet<u64>,
}

impl CharacterClass {
    pub fn is_good_at(&self, p: u64) -> bool {
        !self.bad_set.contains(&p)
    }
}

pub fn classify_character(config: &SurfaceConfig, a: (i64, i64)) -> CharacterClass {
    if a == (0, 0) {
        return CharacterClass { a, kind: CharacterKind::Trivial, bad_set: config.bad_primes.clone() };
    }
    let special = config.forms.iter().position(|f| f.det_vec(a) == 0).map(|i| i + 1);
    let mut bad = config.bad_primes.clone();
    for (i, f) in config.forms.iter().enumerate() {
        if special == Some(i + 1) {
            continue;
        }
        bad.extend(prime_factors(&BigInt::from(f.det_vec(a))));
    }
    bad.extend(prime_factors(&BigInt::from(a.0.gcd(&a.1))));
    let kind = match special {
        Some(k) => CharacterKind::Special(k),
        None => CharacterKind::Generic,
    };
    CharacterClass { a, kind, bad_set: bad }
}

/// `#X(F_p)` by enumerating `P^2(F_p)` and replacing each blown-up point at
/// infinity by the pencil of lines through it.
pub fn count_points_mod_p(config: &SurfaceConfig, p: u64) -> Result<u64> {
    if !is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    if !config.is_good(p) {
        return Err(Error::BadPrime { p });
    }
    let p = p as i64;
    let points = projective_plane(p);
    let lines = projective_plane(p);
    let incident = |pt: &[i64; 3], ln: &[i64; 3]| (pt[0] * ln[0] + pt[1] * ln[1] + pt[2] * ln[2]).rem_euclid(p) == 0;
    let line_at_infinity = [1, 0, 0];
    let mut total = 0u64;
    for pt in &points {
        if pt[0] != 0 {
            total += 1;
            continue;
        }
        let hits: Vec<usize> = config
            .forms
            .iter()
            .enumerate()
            .filter(|(_, f)| (f.u * pt[1] + f.v * pt[2]).rem_euclid(p) == 0)
            .map(|(i, _)| i)
            .collect();
        match hits.len() {
            0 => total += 1,
            1 => {
                let pencil: Vec<&[i64; 3]> = lines.iter().filter(|ln| incident(pt, ln)).collect();
                // D_0 meets D_k in the direction of the line at infinity.
                debug_assert!(pencil.iter().any(|ln| **ln == line_at_infinity));
                total += pencil.len() as u64;
            }
            _ => return Err(Error::BadPrime { p: p as u64 }),
        }
    }
    Ok(total)
}

fn projective_plane(p: i64) -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity((p * p + p + 1) as usize);
    for x1 in 0..p {
        for x2 in 0..p {
            out.push([1, x1, x2]);
        }
    }
    for x2 in 0..p {
        out.push([0, 1, x2]);
    }
    out.push([0, 0, 1]);
    out
}
