//! Feasible reflection-coefficient sets (lookup tables) and element-wise
//! nearest-member projection.
//!
//! Three measured hardware sets ship with the crate: a 1-bit and a 2-bit
//! phase-quantized prototype (`k1`, `k2`, both with a -1 dB amplitude) and a
//! 14-value varactor characterization (`v`). The continuous unit circle acts
//! as the idealized reference. Custom tables load from CSV text.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::Error;
use crate::Result;

/// Amplitude of the 1-bit / 2-bit prototype coefficients (-1 dB).
pub const QUANTIZED_AMPLITUDE: f64 = 0.891250938133746;

/// Tolerance on `|v| <= 1` when validating passivity.
pub const PASSIVITY_TOL: f64 = 1e-9;

/// Tolerance on unit modulus for continuous-table membership.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;

const VARACTOR_CSV: &str = include_str!("data/varactor_lut.csv");

/// Whether a table is a finite set or the continuous unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Discrete,
    UnitCircle,
}

/// A named set of feasible per-element reflection coefficients.
///
/// Discrete values are deduplicated and kept in a canonical order (by phase,
/// then magnitude), which fixes projection tie-breaking.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    name: String,
    values: Vec<Complex64>,
    kind: TableKind,
}

fn canonical_order(a: &Complex64, b: &Complex64) -> core::cmp::Ordering {
    let (pa, pb) = (libm::atan2(a.im, a.re), libm::atan2(b.im, b.re));
    pa.partial_cmp(&pb)
        .expect("finite phases")
        .then(a.norm().partial_cmp(&b.norm()).expect("finite magnitudes"))
}

impl LookupTable {
    /// Builds a discrete table, validating passivity and deduplicating.
    pub fn new_discrete(name: &str, values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyTable);
        }
        for (i, v) in values.iter().enumerate() {
            let mag = v.norm();
            if !(mag <= 1.0 + PASSIVITY_TOL) {
                return Err(Error::Passivity { row: i + 1, magnitude: mag });
            }
        }
        let mut values = values;
        values.sort_unstable_by(canonical_order);
        values.dedup_by(|a, b| (*a - *b).norm() < 1e-15);
        Ok(Self { name: name.to_string(), values, kind: TableKind::Discrete })
    }

    /// The idealized continuous set: every unit-modulus coefficient.
    pub fn unit_circle() -> Self {
        Self {
            name: "unconstrained".to_string(),
            values: Vec::new(),
            kind: TableKind::UnitCircle,
        }
    }

    /// 1-bit phase quantization: two antipodal values of -1 dB amplitude.
    pub fn k1() -> Self {
        let g = QUANTIZED_AMPLITUDE;
        Self::new_discrete("k1", alloc::vec![Complex64::new(g, 0.0), Complex64::new(-g, 0.0)])
            .expect("static table is valid")
    }

    /// 2-bit phase quantization: the 1-bit values closed under rotation by j.
    pub fn k2() -> Self {
        let g = QUANTIZED_AMPLITUDE;
        Self::new_discrete(
            "k2",
            alloc::vec![
                Complex64::new(g, 0.0),
                Complex64::new(0.0, g),
                Complex64::new(-g, 0.0),
                Complex64::new(0.0, -g),
            ],
        )
        .expect("static table is valid")
    }

    /// The 14-value varactor prototype characterization.
    pub fn varactor() -> Self {
        let mut t = Self::parse_csv(VARACTOR_CSV).expect("embedded table is valid");
        t.name = "v".to_string();
        t
    }

    /// All built-in tables: `k1`, `k2`, `v` and the continuous unit circle.
    pub fn builtin() -> Vec<LookupTable> {
        alloc::vec![Self::k1(), Self::k2(), Self::varactor(), Self::unit_circle()]
    }

    /// Looks a built-in table up by name (case-insensitive).
    pub fn builtin_by_name(name: &str) -> Option<LookupTable> {
        let lower = name.to_lowercase();
        Self::builtin().into_iter().find(|t| t.name == lower)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    /// Discrete member values in canonical order; empty for the unit circle.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    /// Whether `v` belongs to the set: exact membership for discrete tables,
    /// unit modulus within [`UNIT_MODULUS_TOL`] for the continuous circle.
    pub fn contains(&self, v: Complex64) -> bool {
        match self.kind {
            TableKind::Discrete => self.values.iter().any(|w| *w == v),
            TableKind::UnitCircle => libm::fabs(v.norm() - 1.0) <= UNIT_MODULUS_TOL,
        }
    }

    /// Parses CSV text with header `re,im` or `mag_db,phase_deg`; `#` starts
    /// a comment. Returns a validated, deduplicated discrete table.
    pub fn parse_csv(text: &str) -> Result<LookupTable> {
        let mut header: Option<bool> = None; // true => re,im
        let mut values = Vec::new();
        let mut rows = Vec::new(); // source line numbers per value
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            if header.is_none() {
                header = match line.to_lowercase().replace(' ', "").as_str() {
                    "re,im" => Some(true),
                    "mag_db,phase_deg" => Some(false),
                    other => {
                        return Err(Error::TableParse {
                            line: lineno,
                            message: alloc::format!(
                                "expected header `re,im` or `mag_db,phase_deg`, found `{other}`"
                            ),
                        })
                    }
                };
                continue;
            }
            let mut parts = line.split(',');
            let (a, b) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => (a.trim(), b.trim()),
                _ => {
                    return Err(Error::TableParse {
                        line: lineno,
                        message: "expected two comma-separated fields".to_string(),
                    })
                }
            };
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::TableParse {
                    line: lineno,
                    message: alloc::format!("not a number: `{s}`"),
                })
            };
            let (a, b) = (parse(a)?, parse(b)?);
            let v = if header == Some(true) {
                Complex64::new(a, b)
            } else {
                let mag = libm::pow(10.0, a / 20.0);
                let ph = b * core::f64::consts::PI / 180.0;
                Complex64::new(mag * libm::cos(ph), mag * libm::sin(ph))
            };
            let mag = v.norm();
            if !(mag <= 1.0 + PASSIVITY_TOL) {
                return Err(Error::Passivity { row: lineno, magnitude: mag });
            }
            values.push(v);
            rows.push(lineno);
        }
        if values.is_empty() {
            return Err(Error::EmptyTable);
        }
        LookupTable::new_discrete("custom", values)
    }

    /// Serializes a discrete table as `re,im` CSV text.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im\n");
        for v in &self.values {
            out.push_str(&alloc::format!("{:.15e},{:.15e}\n", v.re, v.im));
        }
        out
    }
}

/// Nearest-member projection of a single coefficient.
///
/// Discrete tables: the member minimizing `|v - w|^2`, ties resolved by the
/// canonical table order. Unit circle: `v / |v|`, with the phase-zero point
/// chosen for `v = 0`.
pub fn project_value(v: Complex64, table: &LookupTable) -> Complex64 {
    match table.kind {
        TableKind::UnitCircle => {
            let mag = v.norm();
            if mag == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                v / mag
            }
        }
        TableKind::Discrete => {
            let mut best = table.values[0];
            let mut best_d = (v - best).norm_sqr();
            for w in &table.values[1..] {
                let d = (v - w).norm_sqr();
                if d < best_d {
                    best = *w;
                    best_d = d;
                }
            }
            best
        }
    }
}

/// A length-M RIS configuration together with the table it satisfies.
#[derive(Debug, Clone, PartialEq)]
pub struct RisProfile {
    omega: Vec<Complex64>,
    table_ref: String,
}

impl RisProfile {
    /// Wraps a configuration after checking every entry belongs to `table`.
    pub fn new(omega: Vec<Complex64>, table: &LookupTable) -> Result<Self> {
        if omega.iter().any(|&v| !table.contains(v)) {
            return Err(Error::InvalidParameter("profile entry is not a member of the table"));
        }
        Ok(Self { omega, table_ref: table.name().to_string() })
    }

    pub fn omega(&self) -> &[Complex64] {
        &self.omega
    }

    pub fn table_ref(&self) -> &str {
        &self.table_ref
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn into_omega(self) -> Vec<Complex64> {
        self.omega
    }
}

/// Element-wise projection of a configuration onto a table.
pub fn project_profile(omega: &[Complex64], table: &LookupTable) -> RisProfile {
    let projected = omega.iter().map(|&v| project_value(v, table)).collect();
    RisProfile { omega: projected, table_ref: table.name().to_string() }
}
