use super::{DensityError, DensityModel};

/// Parses `family[:p1[,p2]]`, e.g. `exponential:1`, `stretchedexp:1,2`,
/// `lomax:3`, `triangular`.
pub fn parse_spec(spec: &str) -> Result<DensityModel, DensityError> {
    let err = |reason: String| DensityError::Parse {
        spec: spec.to_string(),
        reason,
    };
    let trimmed = spec.trim();
    let (name, rest) = match trimmed.split_once(':') {
        Some((n, r)) => (n.trim(), Some(r)),
        None => (trimmed, None),
    };
    let params: Vec<f64> = match rest {
        None => Vec::new(),
        Some(r) => r
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| err(format!("'{}' is not a number", p.trim())))
            })
            .collect::<Result<_, _>>()?,
    };
    let want = |n: usize| -> Result<(), DensityError> {
        if params.len() == n {
            Ok(())
        } else {
            Err(err(format!(
                "family '{name}' takes {n} parameter(s), got {}",
                params.len()
            )))
        }
    };
    let name = name.to_ascii_lowercase();
    match name.as_str() {
        "exponential" => {
            want(1)?;
            DensityModel::exponential(params[0])
        }
        "stretchedexp" => {
            want(2)?;
            DensityModel::stretched_exp(params[0], params[1])
        }
        "lomax" => {
            want(1)?;
            DensityModel::lomax(params[0])
        }
        "lognormal" => {
            want(1)?;
            DensityModel::lognormal(params[0])
        }
        "gumbel" => {
            want(1)?;
            DensityModel::gumbel(params[0])
        }
        "triangular" => {
            want(0)?;
            Ok(DensityModel::triangular())
        }
        "compactpower" => {
            want(1)?;
            DensityModel::compact_power(params[0])
        }
        "compactfast" => {
            want(2)?;
            DensityModel::compact_fast(params[0], params[1])
        }
        "uniform" => {
            want(0)?;
            Ok(DensityModel::uniform())
        }
        "logboundary" => {
            want(1)?;
            DensityModel::log_boundary(params[0])
        }
        "" => Err(err("empty family name".into())),
        other => Err(err(format!("unknown family '{other}'"))),
    }
}
