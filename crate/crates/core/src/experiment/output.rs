use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::fairness::geometric_mean;

/// `%.9g`-style rendering: nine significant digits, trailing zeros
/// dropped, scientific notation outside `[1e-5, 1e9)`.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mant), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// The value a reader of the CSV sees.
pub(crate) fn rounded(x: f64) -> f64 {
    format_number(x).parse().expect("formatted number parses")
}

pub(crate) const RATES_HEADER: &str = "realization,ts,user,rate_mbps,strategy,power_scheme,num_users,M_B,M_U,P_U";

pub(crate) const HISTOGRAM_HEADER: &str = "strategy,power_scheme,num_users,M_B,M_U,P_U,streams,num_streams,count,mass";

/// Streams of a pattern bitmask as `1+3`, 1-based.
pub(crate) fn pattern_label(mask: u64) -> String {
    (0..64)
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join("+")
}

pub(crate) fn push_row(buf: &mut String, fields: &[&str]) {
    let _ = writeln!(buf, "{}", fields.join(","));
}

/// Recomputes the geometric mean of every realization from the text of
/// a rates file. Keys are the sweep-point columns joined with `,` followed
/// by the realization index.
pub fn geometric_means_from_csv(text: &str) -> BTreeMap<(String, usize), f64> {
    let mut totals: BTreeMap<(String, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let realization: usize = f[0].parse().expect("realization index");
        let user: usize = f[2].parse().expect("user index");
        let rate: f64 = f[3].parse().expect("rate");
        let point = f[4..].join(",");
        *totals
            .entry((point, realization))
            .or_default()
            .entry(user)
            .or_insert(0.0) += rate;
    }
    totals
        .into_iter()
        .map(|(k, users)| (k, geometric_mean(&users.into_values().collect::<Vec<_>>())))
        .collect()
}
