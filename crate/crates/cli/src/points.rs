//! Parsing of complex numbers and point lists.

use loewner::C64;

/// Parses `a`, `bi`, `a+bi`, `a-bi` (also `j` for the imaginary unit).
pub fn parse_complex(text: &str) -> Result<C64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err("empty coordinate".into());
    }
    let bad = || format!("cannot parse `{text}` as a complex number");
    let Some(body) = s.strip_suffix(['i', 'j']) else {
        return s.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that does not start an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| {
        (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E')
    });
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    let re: f64 = re.parse().map_err(|_| bad())?;
    let im: f64 = im.parse().map_err(|_| bad())?;
    Ok(C64::new(re, im))
}

/// Parses points separated by `;` with coordinates separated by `,`, and
/// checks that every point has `dim` coordinates.
pub fn parse_points(text: &str, dim: usize) -> Result<Vec<Vec<C64>>, String> {
    let points: Vec<Vec<C64>> = text
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.split(',').map(parse_complex).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    if points.is_empty() {
        return Err("no points given".into());
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(format!("point has {} coordinates, the field has dimension {dim}", p.len()));
    }
    Ok(points)
}
