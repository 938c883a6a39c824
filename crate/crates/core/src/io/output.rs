//! Band tables (CSV) and band plots (SVG).

use std::fmt::Write as _;

use crate::bands::BandStructure;
use crate::error::{Error, Result};

/// One row per θ: `theta,lambda_0,...`, values in `{:.16e}` so they round-trip.
pub fn band_csv(bands: &BandStructure) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["theta".to_string()];
    header.extend((0..bands.n_bands()).map(|n| format!("lambda_{n}")));
    w.write_record(&header).map_err(csv_error)?;
    for (i, theta) in bands.theta_grid.values().iter().enumerate() {
        let mut row = vec![format!("{theta:.16e}")];
        row.extend(bands.column(i).iter().map(|v| format!("{v:.16e}")));
        w.write_record(&row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

/// Parses a band table back into θ values and `bands[n][i]`.
pub fn parse_band_csv(text: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.get(0) != Some("theta") {
        return Err(Error::Config("band table must start with a theta column".into()));
    }
    let n_bands = headers.len() - 1;
    let mut thetas = Vec::new();
    let mut bands = vec![Vec::new(); n_bands];
    for record in r.records() {
        let record = record.map_err(csv_error)?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number {s:?} in band table: {e}")))
        };
        thetas.push(parse(&record[0])?);
        for (n, band) in bands.iter_mut().enumerate() {
            band.push(parse(&record[n + 1])?);
        }
    }
    Ok((thetas, bands))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("band table: {e}"))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;

/// Line plot of every band against θ.
pub fn band_svg(bands: &BandStructure) -> String {
    let thetas = bands.theta_grid.values();
    let (t0, t1) = (thetas[0], thetas[thetas.len() - 1]);
    let lo = bands.bands.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = bands.bands.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let tspan = if t1 > t0 { t1 - t0 } else { 1.0 };
    let sx = |t: f64| MARGIN + (t - t0) / tspan * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - lo) / span * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">theta</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12">epsilon = {}, lambda in [{lo:.4}, {hi:.4}]</text>"#,
        MARGIN,
        MARGIN - 12.0,
        bands.epsilon
    );
    for band in &bands.bands {
        let points: Vec<String> = thetas
            .iter()
            .zip(band)
            .map(|(&t, &v)| format!("{:.3},{:.3}", sx(t), sy(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::ThetaGrid;
    use crate::operator::SpectralGrid;

    fn sample() -> BandStructure {
        let grid = ThetaGrid::uniform(9).unwrap();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|n| grid.values().iter().map(|t| n as f64 + t * t / 3.0 + 1e-17).collect())
            .collect();
        BandStructure::from_rows(grid, 0.05, SpectralGrid::default(), "digest".into(), rows).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let b = sample();
        let text = band_csv(&b).unwrap();
        assert!(text.starts_with("theta,lambda_0,lambda_1,lambda_2\n"));
        let (thetas, rows) = parse_band_csv(&text).unwrap();
        assert_eq!(thetas, b.theta_grid.values());
        assert_eq!(rows, b.bands);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(parse_band_csv("x,lambda_0\n0,1\n").is_err());
        assert!(parse_band_csv("theta,lambda_0\n0,abc\n").is_err());
    }

    #[test]
    fn svg_has_one_line_per_band() {
        let svg = band_svg(&sample());
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
