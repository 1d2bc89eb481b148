//! File formats: XYZ geometry, per-nucleus hyperfine CSV, spin CSV, echo
//! series CSV, and the tabular reports written by the CLI.
//!
//! Parsers report the offending line and never return partial results.
//! Writers go through a temporary file in the target directory and rename
//! it into place.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::exact::SweepRow;
use crate::fit::FitResult;
use crate::hetero::IsotopeRow;
use crate::spin_model::{
    chemical_element, element_of, normalize_element, IsotopeTable, NuclearSpin, PairParams,
};
use crate::tcl::{EchoSeries, Method};

pub const HYPERFINE_HEADER: &str = "index,isotope,azz,azz_unit";
pub const SPIN_HEADER: &str = "id,isotope,x,y,z,azz_rad_s";
pub const SERIES_HEADER: &str = "time_us,coherence,method";
pub const PAIRS_HEADER: &str = "id_k,id_l,delta_rad_s,b_rad_s,alpha_sq,freq_rad_s";
pub const SWEEP_HEADER: &str =
    "branch,alpha_sq,b_over_delta,fidelity_tcl2_half,fidelity_tcl2_revival,fidelity_tcl4_half,fidelity_tcl4_revival";
pub const ISOTOPE_HEADER: &str = "isotope,spin,b_rad_s,max_w,order";

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: String,
    /// Å
    pub position: [f64; 3],
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Replace `path` with `contents` via temp file + rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.flush())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn parse_f64(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("{what} `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("{what} `{field}` is not finite")));
    }
    Ok(v)
}

pub fn parse_xyz_str(path: &Path, text: &str) -> Result<Vec<Atom>> {
    let lines: Vec<&str> = text.lines().collect();
    let count_line = lines
        .first()
        .ok_or_else(|| Error::parse(path, 1, "empty file, expected an atom count"))?;
    let count: usize = count_line
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("atom count `{}` is not an integer", count_line.trim())))?;
    if lines.len() < 2 {
        return Err(Error::parse(path, 2, "missing comment line"));
    }
    let mut atoms = Vec::with_capacity(count);
    for i in 0..count {
        let line_no = i + 3;
        let line = lines.get(i + 2).ok_or_else(|| {
            Error::parse(
                path,
                line_no,
                format!("expected {count} atom rows, file ends after line {}", lines.len()),
            )
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected `element x y z`, found {} fields", fields.len()),
            ));
        }
        let element = normalize_element(fields[0]);
        if !element.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(Error::parse(path, line_no, format!("bad element symbol `{}`", fields[0])));
        }
        let mut position = [0.0; 3];
        for (k, axis) in ["x", "y", "z"].iter().enumerate() {
            position[k] = parse_f64(path, line_no, fields[k + 1], axis)?;
        }
        atoms.push(Atom { element, position });
    }
    if let Some((extra, _)) = lines
        .iter()
        .enumerate()
        .skip(count + 2)
        .find(|(_, l)| !l.trim().is_empty())
    {
        return Err(Error::parse(
            path,
            extra + 1,
            format!("unexpected content after {count} atom rows"),
        ));
    }
    Ok(atoms)
}

pub fn parse_xyz(path: &Path) -> Result<Vec<Atom>> {
    parse_xyz_str(path, &read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperfineUnit {
    RadPerSecond,
    /// A/2π in MHz.
    MegaHertz,
}

impl HyperfineUnit {
    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "rad_s" => Some(HyperfineUnit::RadPerSecond),
            "MHz" => Some(HyperfineUnit::MegaHertz),
            _ => None,
        }
    }

    pub fn to_rad_per_second(self, value: f64) -> f64 {
        match self {
            HyperfineUnit::RadPerSecond => value,
            HyperfineUnit::MegaHertz => value * 2.0 * PI * 1e6,
        }
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn csv_records<'a>(
    path: &'a Path,
    text: &'a str,
    header: &'a str,
) -> Result<impl Iterator<Item = Result<(usize, csv::StringRecord)>> + 'a> {
    let mut records = csv_reader(text).into_records();
    let expected: Vec<&str> = header.split(',').collect();
    match records.next() {
        None => return Err(Error::parse(path, 1, format!("empty file, expected header `{header}`"))),
        Some(Err(e)) => return Err(Error::parse(path, 1, e.to_string())),
        Some(Ok(rec)) => {
            if rec.iter().collect::<Vec<_>>() != expected {
                return Err(Error::parse(path, 1, format!("expected header `{header}`")));
            }
        }
    }
    let width = expected.len();
    Ok(records.map(move |r| {
        let rec = r.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::parse(
                path,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        Ok((line, rec))
    }))
}

/// Hyperfine rows joined to XYZ atoms by 0-based atom index. Spin ids are the
/// atom indices.
pub fn parse_hyperfine_str(
    path: &Path,
    text: &str,
    atoms: &[Atom],
    table: &IsotopeTable,
) -> Result<Vec<NuclearSpin>> {
    let mut seen = BTreeSet::new();
    let mut spins = Vec::new();
    for row in csv_records(path, text, HYPERFINE_HEADER)? {
        let (line, rec) = row?;
        let index: u32 = rec[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("index `{}` is not a non-negative integer", &rec[0])))?;
        if !seen.insert(index) {
            return Err(Error::parse(path, line, format!("duplicate index {index}")));
        }
        let isotope = &rec[1];
        table
            .get(isotope)
            .map_err(|_| Error::parse(path, line, format!("unknown isotope `{isotope}`")))?;
        let value = parse_f64(path, line, &rec[2], "azz")?;
        let unit = HyperfineUnit::parse(&rec[3])
            .ok_or_else(|| Error::parse(path, line, format!("unknown unit `{}` (rad_s or MHz)", &rec[3])))?;
        let atom = atoms.get(index as usize).ok_or_else(|| {
            Error::parse(
                path,
                line,
                format!("index {index} out of range for {} atoms", atoms.len()),
            )
        })?;
        if chemical_element(&atom.element) != element_of(isotope) {
            return Err(Error::parse(
                path,
                line,
                format!("isotope `{isotope}` does not match atom {index} ({})", atom.element),
            ));
        }
        spins.push(NuclearSpin::from_table(
            table,
            index,
            isotope,
            atom.position,
            unit.to_rad_per_second(value),
        )?);
    }
    Ok(spins)
}

pub fn parse_hyperfine_csv(path: &Path, atoms: &[Atom], table: &IsotopeTable) -> Result<Vec<NuclearSpin>> {
    parse_hyperfine_str(path, &read(path)?, atoms, table)
}

pub fn format_spin_csv(spins: &[NuclearSpin]) -> String {
    let mut out = String::from(SPIN_HEADER);
    out.push('\n');
    for s in spins {
        let [x, y, z] = s.position;
        let _ = writeln!(out, "{},{},{x:?},{y:?},{z:?},{:?}", s.id, s.isotope, s.azz);
    }
    out
}

pub fn write_spin_csv(spins: &[NuclearSpin], path: &Path) -> Result<()> {
    write_atomic(path, &format_spin_csv(spins))
}

pub fn parse_spin_str(path: &Path, text: &str, table: &IsotopeTable) -> Result<Vec<NuclearSpin>> {
    let mut seen = BTreeSet::new();
    let mut spins = Vec::new();
    for row in csv_records(path, text, SPIN_HEADER)? {
        let (line, rec) = row?;
        let id: u32 = rec[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("id `{}` is not a non-negative integer", &rec[0])))?;
        if !seen.insert(id) {
            return Err(Error::parse(path, line, format!("duplicate id {id}")));
        }
        let isotope = &rec[1];
        table
            .get(isotope)
            .map_err(|_| Error::parse(path, line, format!("unknown isotope `{isotope}`")))?;
        let position = [
            parse_f64(path, line, &rec[2], "x")?,
            parse_f64(path, line, &rec[3], "y")?,
            parse_f64(path, line, &rec[4], "z")?,
        ];
        let azz = parse_f64(path, line, &rec[5], "azz_rad_s")?;
        spins.push(NuclearSpin::from_table(table, id, isotope, position, azz)?);
    }
    Ok(spins)
}

pub fn parse_spin_csv(path: &Path, table: &IsotopeTable) -> Result<Vec<NuclearSpin>> {
    parse_spin_str(path, &read(path)?, table)
}

/// Time in μs with 9 significant digits; coherence in shortest round-trip form.
pub fn format_series_csv(series: &[&EchoSeries]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for s in series {
        for (t, v) in s.times.iter().zip(&s.values) {
            let _ = writeln!(out, "{:.8e},{v:?},{}", t * 1e6, s.method);
        }
    }
    out
}

pub fn emit_series_csv(series: &EchoSeries, path: &Path) -> Result<()> {
    write_atomic(path, &format_series_csv(&[series]))
}

pub fn emit_series_group_csv(series: &[&EchoSeries], path: &Path) -> Result<()> {
    write_atomic(path, &format_series_csv(series))
}

/// One series per method, in order of first appearance; times back in seconds.
pub fn parse_series_str(path: &Path, text: &str) -> Result<Vec<EchoSeries>> {
    let mut out: Vec<EchoSeries> = Vec::new();
    for row in csv_records(path, text, SERIES_HEADER)? {
        let (line, rec) = row?;
        let t = parse_f64(path, line, &rec[0], "time_us")? * 1e-6;
        let v = parse_f64(path, line, &rec[1], "coherence")?;
        let method: Method = rec[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("unknown method `{}`", &rec[2])))?;
        let idx = match out.iter().position(|s| s.method == method) {
            Some(i) => i,
            None => {
                out.push(EchoSeries {
                    times: Vec::new(),
                    values: Vec::new(),
                    method,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        if let Some(&last) = s.times.last() {
            if !(t > last) {
                return Err(Error::parse(path, line, "times must be strictly increasing"));
            }
        }
        s.times.push(t);
        s.values.push(v);
    }
    Ok(out)
}

pub fn parse_series_csv(path: &Path) -> Result<Vec<EchoSeries>> {
    parse_series_str(path, &read(path)?)
}

pub fn format_pairs_csv(pairs: &[PairParams]) -> String {
    let mut out = String::from(PAIRS_HEADER);
    out.push('\n');
    for p in pairs {
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?}",
            p.ids.0, p.ids.1, p.delta, p.b, p.alpha_sq, p.freq
        );
    }
    out
}

pub fn format_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.branch, r.alpha_sq, r.b, r.tcl2_half, r.tcl2_revival, r.tcl4_half, r.tcl4_revival
        );
    }
    out
}

pub fn format_isotope_csv(rows: &[IsotopeRow]) -> String {
    let mut out = String::from(ISOTOPE_HEADER);
    out.push('\n');
    for r in rows {
        let order = r.order.map(|o| format!("1e{o}")).unwrap_or_else(|| "0".into());
        let _ = writeln!(out, "{},{},{:?},{:e},{order}", r.isotope, r.spin, r.b, r.max_w);
    }
    out
}

pub fn format_fit(fit: &FitResult) -> String {
    format!(
        "T2_us = {:.9e}\nbeta = {:.9}\namplitude = {:.9}\nresidual_rms = {:.3e}\n",
        fit.t2 * 1e6,
        fit.beta,
        fit.amplitude,
        fit.residual_rms
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    fn line_of(e: Error) -> usize {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn xyz_basic() {
        let atoms = parse_xyz_str(p(), "2\ncomment\nv 0 0 0\nO 0.0 0.0 1.6\n").unwrap();
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].element, "V");
        assert_eq!(atoms[1].position, [0.0, 0.0, 1.6]);
    }

    #[test]
    fn xyz_errors() {
        let short = parse_xyz_str(p(), "3\nc\nH 0 0 0\nH 0 0 1\n").unwrap_err();
        assert!(short.to_string().contains("line 4"), "{short}");
        assert!(line_of(parse_xyz_str(p(), "").unwrap_err()) == 1);
        assert_eq!(line_of(parse_xyz_str(p(), "two\nc\n").unwrap_err()), 1);
        assert_eq!(line_of(parse_xyz_str(p(), "1\nc\nH 0 zero 0\n").unwrap_err()), 3);
        assert_eq!(line_of(parse_xyz_str(p(), "1\nc\nH 0 0\n").unwrap_err()), 3);
        assert_eq!(line_of(parse_xyz_str(p(), "1\nc\nH 0 0 0\nH 1 1 1\n").unwrap_err()), 4);
        assert!(parse_xyz_str(p(), "1\nc\nH 0 0 0\n\n\n").is_ok());
    }

    fn atoms() -> Vec<Atom> {
        parse_xyz_str(p(), "4\nm\nV 0 0 0\nO 0 0 1.6\nC 2 0 0\nH 3 1 0\n").unwrap()
    }

    #[test]
    fn hyperfine_units() {
        let table = IsotopeTable::default();
        let spins = parse_hyperfine_str(
            p(),
            "index,isotope,azz,azz_unit\n3,1H,1.0,MHz\n0,51V,-2.5e8,rad_s\n",
            &atoms(),
            &table,
        )
        .unwrap();
        assert_relative_eq!(spins[0].azz, 6.283185307179586e6, max_relative = 1e-15);
        assert_eq!(spins[0].position, [3.0, 1.0, 0.0]);
        assert_eq!(spins[0].id, 3);
        assert_eq!(spins[1].azz, -2.5e8);
    }

    #[test]
    fn hyperfine_errors() {
        let table = IsotopeTable::default();
        let a = atoms();
        let dup = "index,isotope,azz,azz_unit\n3,1H,1,MHz\n3,1H,2,MHz\n";
        assert_eq!(line_of(parse_hyperfine_str(p(), dup, &a, &table).unwrap_err()), 3);
        let unit = "index,isotope,azz,azz_unit\n3,1H,1,GHz\n";
        assert_eq!(line_of(parse_hyperfine_str(p(), unit, &a, &table).unwrap_err()), 2);
        let iso = "index,isotope,azz,azz_unit\n3,3He,1,MHz\n";
        assert!(parse_hyperfine_str(p(), iso, &a, &table).is_err());
        let range = "index,isotope,azz,azz_unit\n9,1H,1,MHz\n";
        assert!(parse_hyperfine_str(p(), range, &a, &table).is_err());
        let mismatch = "index,isotope,azz,azz_unit\n2,1H,1,MHz\n";
        assert!(parse_hyperfine_str(p(), mismatch, &a, &table).is_err());
        let header = "idx,isotope,azz,azz_unit\n3,1H,1,MHz\n";
        assert_eq!(line_of(parse_hyperfine_str(p(), header, &a, &table).unwrap_err()), 1);
        let short = "index,isotope,azz,azz_unit\n3,1H,1\n";
        assert_eq!(line_of(parse_hyperfine_str(p(), short, &a, &table).unwrap_err()), 2);
    }

    #[test]
    fn series_emission() {
        let s = EchoSeries {
            times: (0..512).map(|i| i as f64 * 1e-8).collect(),
            values: (0..512).map(|i| (-(i as f64) / 100.0).exp()).collect(),
            method: Method::Tcl2,
        };
        let text = format_series_csv(&[&s]);
        assert_eq!(text.lines().count(), 513);
        assert!(text.ends_with('\n'));
        let back = parse_series_str(p(), &text).unwrap();
        assert_eq!(back.len(), 1);
        for (a, b) in s.values.iter().zip(&back[0].values) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
        let empty = EchoSeries {
            times: vec![],
            values: vec![],
            method: Method::Exact,
        };
        assert_eq!(format_series_csv(&[&empty]), "time_us,coherence,method\n");
    }

    #[test]
    fn spin_csv_errors() {
        let table = IsotopeTable::default();
        let dup = "id,isotope,x,y,z,azz_rad_s\n1,1H,0,0,0,1\n1,1H,1,0,0,1\n";
        assert_eq!(line_of(parse_spin_str(p(), dup, &table).unwrap_err()), 3);
        let nan = "id,isotope,x,y,z,azz_rad_s\n1,1H,0,0,inf,1\n";
        assert_eq!(line_of(parse_spin_str(p(), nan, &table).unwrap_err()), 2);
    }

    #[test]
    fn atomic_write_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, "a\n").unwrap();
        write_atomic(&path, "b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "b\n");
        assert!(write_atomic(&dir.path().join("missing/out.csv"), "x").is_err());
    }

    proptest! {
        #[test]
        fn series_round_trip(values in proptest::collection::vec(0.0f64..=1.0, 1..50), dt in 1e-9f64..1e-5) {
            let s = EchoSeries {
                times: (0..values.len()).map(|i| i as f64 * dt).collect(),
                values: values.clone(),
                method: Method::Tcl4,
            };
            let back = parse_series_str(p(), &format_series_csv(&[&s])).unwrap();
            prop_assert_eq!(&back[0].values, &values);
            for (a, b) in s.times.iter().zip(&back[0].times) {
                // 9 significant digits
                prop_assert!((a - b).abs() <= 5e-9 * a.abs());
            }
        }

        #[test]
        fn spin_round_trip(coords in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0, -1e7f64..1e7), 0..20)) {
            let table = IsotopeTable::default();
            let spins: Vec<_> = coords
                .iter()
                .enumerate()
                .map(|(i, &(x, y, z, a))| NuclearSpin::from_table(&table, i as u32, "1H", [x, y, z], a).unwrap())
                .collect();
            let back = parse_spin_str(p(), &format_spin_csv(&spins), &table).unwrap();
            prop_assert_eq!(back, spins);
        }
    }
}
