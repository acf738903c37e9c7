//! Discrete MCS table, the piecewise-constant rate function it induces, and
//! the smooth concave surrogate used inside the search.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 5G NR mapping: (rate in bits/s/Hz, required SNR in dB) for levels 1..=15.
const NR_LEVELS: [(f64, f64); 15] = [
    (0.15, -6.82),
    (0.38, -3.44),
    (0.88, -0.53),
    (1.48, 3.79),
    (1.91, 5.80),
    (2.41, 8.08),
    (2.73, 9.76),
    (3.32, 11.72),
    (3.90, 13.49),
    (4.52, 15.87),
    (5.12, 17.73),
    (5.55, 19.50),
    (6.23, 21.32),
    (6.91, 23.51),
    (7.40, 25.15),
];

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsLevel {
    pub snr_threshold_db: f64,
    pub snr_threshold_linear: f64,
    pub rate: f64,
}

/// Ordered MCS levels. Level indices are 1-based; level 0 means "no
/// transmission" and has rate 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    levels: Vec<McsLevel>,
}

impl Default for McsTable {
    fn default() -> Self {
        Self::nr()
    }
}

impl McsTable {
    /// The built-in 15-level 5G NR table.
    pub fn nr() -> Self {
        Self::from_rates_db(&NR_LEVELS).expect("built-in table is valid")
    }

    /// Builds a table from `(rate, snr_db)` pairs ordered by level.
    pub fn from_rates_db(rows: &[(f64, f64)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::McsTable("table must have at least one level".into()));
        }
        for (i, w) in rows.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(Error::McsTable(format!(
                    "rates must be strictly increasing (level {} -> {})",
                    i + 1,
                    i + 2
                )));
            }
            if !(w[1].1 > w[0].1) {
                return Err(Error::McsTable(format!(
                    "SNR thresholds must be strictly increasing (level {} -> {})",
                    i + 1,
                    i + 2
                )));
            }
        }
        if rows.iter().any(|&(r, s)| !r.is_finite() || !s.is_finite() || r <= 0.0) {
            return Err(Error::McsTable("rates must be positive and finite".into()));
        }
        let levels = rows
            .iter()
            .map(|&(rate, db)| McsLevel {
                snr_threshold_db: db,
                snr_threshold_linear: db_to_linear(db),
                rate,
            })
            .collect();
        Ok(Self { levels })
    }

    /// Parses a text table with one row per level: `index rate snr_db`.
    /// Fields may be separated by commas or whitespace; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 3 {
                return Err(Error::McsTable(format!(
                    "line {}: expected 3 fields (index, rate, snr_db), found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let bad = |what: &str| Error::McsTable(format!("line {}: cannot parse {what}", lineno + 1));
            let index: usize = fields[0].parse().map_err(|_| bad("index"))?;
            let rate: f64 = fields[1].parse().map_err(|_| bad("rate"))?;
            let db: f64 = fields[2].parse().map_err(|_| bad("snr_db"))?;
            rows.push((index, rate, db));
        }
        rows.sort_by_key(|r| r.0);
        for (i, r) in rows.iter().enumerate() {
            if r.0 != i + 1 {
                return Err(Error::McsTable(format!(
                    "level indices must be 1..=L without gaps, found {} at position {}",
                    r.0,
                    i + 1
                )));
            }
        }
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.1, r.2)).collect();
        Self::from_rates_db(&pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Number of levels L.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[McsLevel] {
        &self.levels
    }

    /// Rate of level `l`, with level 0 mapping to 0.
    pub fn rate_of(&self, level: usize) -> f64 {
        if level == 0 {
            0.0
        } else {
            self.levels[level - 1].rate
        }
    }

    /// Linear SNR threshold of level `l` (`l >= 1`).
    pub fn threshold(&self, level: usize) -> f64 {
        self.levels[level - 1].snr_threshold_linear
    }

    /// Highest linear threshold, Γ_L.
    pub fn top_threshold(&self) -> f64 {
        self.levels[self.levels.len() - 1].snr_threshold_linear
    }

    pub fn top_rate(&self) -> f64 {
        self.levels[self.levels.len() - 1].rate
    }

    /// Largest level whose threshold is at or below `snr`, or 0.
    pub fn level(&self, snr: f64) -> usize {
        self.levels.partition_point(|l| l.snr_threshold_linear <= snr)
    }

    /// MCS-based rate: the rate of the highest attainable level.
    pub fn rate(&self, snr: f64) -> f64 {
        self.rate_of(self.level(snr))
    }

    /// Power needed to push a stream with effective channel `eff_channel`
    /// to the top threshold; beyond this power the MCS rate cannot improve.
    pub fn power_cap(&self, eff_channel: f64) -> Result<f64> {
        if !(eff_channel > 0.0) {
            return Err(Error::UndefinedCap);
        }
        Ok(power_for_snr(self.top_threshold(), eff_channel))
    }
}

/// `A · ln(1 + D·snr)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedRateModel {
    pub a_coeff: f64,
    pub d_coeff: f64,
}

impl Default for FittedRateModel {
    fn default() -> Self {
        Self {
            a_coeff: 1.389,
            d_coeff: 0.5191,
        }
    }
}

impl FittedRateModel {
    pub fn new(a_coeff: f64, d_coeff: f64) -> Result<Self> {
        if !(a_coeff > 0.0 && a_coeff.is_finite()) || !(d_coeff > 0.0 && d_coeff.is_finite()) {
            return Err(Error::Config(format!(
                "fitting coefficients must be positive (A = {a_coeff}, D = {d_coeff})"
            )));
        }
        Ok(Self { a_coeff, d_coeff })
    }

    #[inline]
    pub fn rate(&self, snr: f64) -> f64 {
        self.a_coeff * (self.d_coeff * snr).ln_1p()
    }
}

pub fn mcs_rate(snr: f64, table: &McsTable) -> f64 {
    table.rate(snr)
}

pub fn mcs_level(snr: f64, table: &McsTable) -> usize {
    table.level(snr)
}

pub fn fitted_rate(snr: f64, model: &FittedRateModel) -> f64 {
    model.rate(snr)
}

pub fn power_cap(eff_channel: f64, table: &McsTable) -> Result<f64> {
    table.power_cap(eff_channel)
}

/// Smallest power `p` with `p * eff_channel >= snr` in floating point, so
/// that quantized powers land exactly on (not just below) a threshold.
pub fn power_for_snr(snr: f64, eff_channel: f64) -> f64 {
    let mut p = snr / eff_channel;
    while p * eff_channel < snr {
        p = p.next_up();
    }
    // step back while still sufficient
    loop {
        let down = p.next_down();
        if down >= 0.0 && down * eff_channel >= snr {
            p = down;
        } else {
            break;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rate_examples() {
        let t = McsTable::nr();
        assert_eq!(t.rate(10f64.powf(-1.0)), 0.0);
        assert_eq!(t.rate(1.0), 0.88);
        assert_eq!(t.rate(1e3), 7.40);
    }

    #[test]
    fn level_examples() {
        let t = McsTable::nr();
        assert_eq!(t.level(0.0), 0);
        assert_eq!(t.level(t.threshold(5)), 5);
        assert_eq!(t.level(1e6), 15);
    }

    #[test]
    fn fitted_examples() {
        let m = FittedRateModel::default();
        assert_eq!(m.rate(0.0), 0.0);
        // 1.389 ln(1 + 0.5191 * 10^2.515), evaluated at 40 digits
        assert_relative_eq!(m.rate(10f64.powf(2.515)), 7.141141464354632, max_relative = 1e-13);
        assert_relative_eq!(
            m.rate((std::f64::consts::E - 1.0) / m.d_coeff),
            m.a_coeff,
            max_relative = 1e-14
        );
    }

    #[test]
    fn cap_examples() {
        let t = McsTable::nr();
        let gl = t.top_threshold();
        assert_relative_eq!(t.power_cap(gl).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(t.power_cap(2.0).unwrap(), 163.6703474394191, max_relative = 1e-13);
        let e = 10f64.powf(2.515);
        let tau = t.power_cap(e).unwrap();
        assert_relative_eq!(tau, 1.0, max_relative = 1e-14);
        assert_eq!(t.rate(tau * e), 7.40);
        assert!(matches!(t.power_cap(0.0), Err(Error::UndefinedCap)));
    }

    #[test]
    fn boundaries_are_inclusive() {
        let t = McsTable::nr();
        for l in 1..=t.len() {
            let g = t.threshold(l);
            assert_eq!(t.rate(g), t.rate_of(l));
            assert_eq!(t.rate(g - 1e-9 * g), t.rate_of(l - 1));
        }
    }

    #[test]
    fn parse_round_trip() {
        let mut text = String::from("# index rate snr_db\n");
        for (i, (r, s)) in NR_LEVELS.iter().enumerate() {
            text.push_str(&format!("{}, {r}, {s}\n", i + 1));
        }
        assert_eq!(McsTable::parse(&text).unwrap(), McsTable::nr());
    }

    #[test]
    fn parse_rejects_bad_tables() {
        assert!(McsTable::parse("").is_err());
        assert!(McsTable::parse("1 0.5 2.0\n2 0.4 3.0").is_err());
        assert!(McsTable::parse("1 0.5 2.0\n2 0.6 1.0").is_err());
        assert!(McsTable::parse("1 0.5 2.0\n3 0.6 4.0").is_err());
        let err = McsTable::parse("1 0.5\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn power_for_snr_is_tight() {
        for &(g, e) in &[(3.0, 7.0), (0.1, 1e-3), (327.34, 2.3e9), (1.0, 3.0)] {
            let p = power_for_snr(g, e);
            assert!(p * e >= g);
            assert!(p.next_down() * e < g);
        }
    }
}
