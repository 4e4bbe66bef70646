//! Plain-text grid field files.
//!
//! Header line `nx nt h tau`, then one line per interior node `i` holding the
//! values at levels `0..=nt`. Floats are written with the shortest
//! representation that parses back to the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{GridField, MeshQ};
use crate::error::{Error, Result};

pub fn format_grid_field(field: &GridField) -> String {
    let m = field.mesh();
    let h = m.h()[0];
    let mut out = String::new();
    writeln!(out, "{} {} {:?} {:?}", m.nx, m.nt, h, m.tau()).unwrap();
    for i in 0..m.nodes() {
        for n in 0..m.levels() {
            if n > 0 {
                out.push(' ');
            }
            write!(out, "{:?}", field.at(i, n)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_grid_field(path: &Path, field: &GridField) -> Result<()> {
    fs::write(path, format_grid_field(field))?;
    Ok(())
}

pub fn parse_grid_field(text: &str, mesh: &MeshQ, path: &Path) -> Result<GridField> {
    let bad = |message: String| Error::GridFile {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(bad(format!("header must be `nx nt h tau`, got `{header}`")));
    }
    let nx: usize = fields[0].parse().map_err(|_| bad(format!("bad nx `{}`", fields[0])))?;
    let nt: usize = fields[1].parse().map_err(|_| bad(format!("bad nt `{}`", fields[1])))?;
    let h: f64 = fields[2].parse().map_err(|_| bad(format!("bad h `{}`", fields[2])))?;
    let tau: f64 = fields[3].parse().map_err(|_| bad(format!("bad tau `{}`", fields[3])))?;
    if nx != mesh.nx || nt != mesh.nt || h != mesh.h()[0] || tau != mesh.tau() {
        return Err(Error::MeshMismatch(format!(
            "{}: file has nx={nx} nt={nt} h={h} tau={tau}, mesh has nx={} nt={} h={} tau={}",
            path.display(),
            mesh.nx,
            mesh.nt,
            mesh.h()[0],
            mesh.tau()
        )));
    }
    let mut field = GridField::zeros(mesh);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if i >= mesh.nodes() {
            return Err(bad(format!("more than {} data rows", mesh.nodes())));
        }
        let mut count = 0;
        for (n, tok) in line.split_whitespace().enumerate() {
            if n >= mesh.levels() {
                return Err(bad(format!("row {i} has more than {} values", mesh.levels())));
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| bad(format!("row {i}: bad float `{tok}`")))?;
            if !v.is_finite() {
                return Err(bad(format!("row {i}: non-finite value `{tok}`")));
            }
            field.set(i, n, v);
            count += 1;
        }
        if count != mesh.levels() {
            return Err(bad(format!("row {i} has {count} values, expected {}", mesh.levels())));
        }
        rows += 1;
    }
    if rows != mesh.nodes() {
        return Err(bad(format!("{rows} data rows, expected {}", mesh.nodes())));
    }
    Ok(field)
}

pub fn read_grid_field(path: &Path, mesh: &MeshQ) -> Result<GridField> {
    let text = fs::read_to_string(path).map_err(|e| Error::GridFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_grid_field(&text, mesh, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpatialDomain;
    use proptest::prelude::*;

    fn mesh() -> MeshQ {
        MeshQ::new(SpatialDomain::interval(-0.3, 1.7).unwrap(), 0.9, 3, 4).unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(vals in proptest::collection::vec(
            prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), Just(-0.0), Just(1e-300)],
            15,
        )) {
            let m = mesh();
            let f = GridField::from_values(&m, vals).unwrap();
            let text = format_grid_field(&f);
            let back = parse_grid_field(&text, &m, Path::new("mem")).unwrap();
            for (a, b) in f.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        let m = mesh();
        let p = Path::new("mem");
        assert!(parse_grid_field("", &m, p).is_err());
        assert!(parse_grid_field("3 4 0.5", &m, p).is_err());
        let good = format_grid_field(&GridField::constant(&m, 1.0));
        let mut lines: Vec<&str> = good.lines().collect();
        lines.pop();
        assert!(parse_grid_field(&lines.join("\n"), &m, p).is_err());
        let corrupted = good.replacen("1.0", "1.0x", 1);
        assert!(parse_grid_field(&corrupted, &m, p).is_err());
        let other = MeshQ::new(SpatialDomain::interval(-0.3, 1.7).unwrap(), 0.9, 3, 5).unwrap();
        assert!(matches!(parse_grid_field(&good, &other, p), Err(Error::MeshMismatch(_))));
    }
}
