//! Argument parsing helpers.

use iraas_core::config::Regime;

/// Seeds as `a..b` (inclusive), a comma list, or a mix: `1..5,9,12..13`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| format!("bad seed `{a}`"))?;
                let b: u64 = b
                    .trim()
                    .trim_start_matches('=')
                    .parse()
                    .map_err(|_| format!("bad seed `{b}`"))?;
                if b < a {
                    return Err(format!("empty seed range `{part}`"));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| format!("bad seed `{part}`"))?),
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

pub fn parse_regimes(text: &str) -> Result<Vec<Regime>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}
