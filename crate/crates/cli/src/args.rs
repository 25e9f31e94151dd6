use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use robout::pipeline::Variant;
use robout::Standardization;

/// Column scale seen by the selector.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Scaling {
    /// Median centering, standard-deviation scaling.
    Sd,
    /// Median centering, MAD scaling.
    Mad,
}

impl From<Scaling> for Standardization {
    fn from(s: Scaling) -> Self {
        match s {
            Scaling::Sd => Standardization::MedianSd,
            Scaling::Mad => Standardization::MedianMad,
        }
    }
}

/// `all` or a comma-separated list of variant names.
pub fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Variant::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let v: Variant = part.parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        bail!("no variants given");
    }
    Ok(out)
}

/// Comma-separated positive integers.
pub fn parse_k_grid(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k: usize = part.parse().with_context(|| format!("invalid K {part:?}"))?;
        if k == 0 {
            bail!("K must be at least 1");
        }
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        bail!("no K values given");
    }
    Ok(out)
}

/// `start:step:stop` (inclusive), or a comma-separated list.
pub fn parse_m_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| -> Result<f64> {
        let v: f64 = t.trim().parse().with_context(|| format!("invalid number {t:?} in m grid"))?;
        if !v.is_finite() {
            bail!("m grid values must be finite");
        }
        Ok(v)
    };
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if step <= 0.0 || stop < start {
                bail!("m grid {s:?} must have a positive step and stop >= start");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + i as f64 * step).collect()
        }
        [list] => list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(num)
            .collect::<Result<Vec<f64>>>()?,
        _ => bail!("m grid {s:?} is not start:step:stop or a list"),
    };
    if grid.is_empty() {
        bail!("empty m grid");
    }
    if let Some(bad) = grid.iter().find(|m| **m < 1.0) {
        bail!("m = {bad} is below 1");
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_grid_forms() {
        assert_eq!(parse_m_grid("3:2:19").unwrap(), vec![3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0, 17.0, 19.0]);
        assert_eq!(parse_m_grid("19").unwrap(), vec![19.0]);
        assert_eq!(parse_m_grid("1.5,4").unwrap(), vec![1.5, 4.0]);
        assert!(parse_m_grid("3:0:9").is_err());
        assert!(parse_m_grid("0.5").is_err());
        assert!(parse_m_grid("a:b").is_err());
    }

    #[test]
    fn variant_lists() {
        assert_eq!(parse_variants("all").unwrap().len(), 6);
        let v = parse_variants("sncd-h+mm,SNCD-Q+LTS,sncd-h+mm").unwrap();
        assert_eq!(v.len(), 2);
        assert!(parse_variants("sncd-x+mm").is_err());
    }

    #[test]
    fn k_lists() {
        assert_eq!(parse_k_grid("2,3, 4,5").unwrap(), vec![2, 3, 4, 5]);
        assert!(parse_k_grid("0").is_err());
        assert!(parse_k_grid("").is_err());
    }
}
