//! Output encoding: JSON and CSV with every float printed to 17 significant
//! digits, plus the gauge CSV reader.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{Error, Result};
use crate::functional::GaugeField;
use crate::linalg::{c, CMat};
use crate::wannier::WannierSet;

/// 17 significant digits; enough for an exact round trip of any f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Compact JSON formatter whose floats carry 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct F17Formatter;

impl Formatter for F17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

/// Serializes to UTF-8 JSON; non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, F17Formatter);
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)).map_err(|e| Error::io(path.display(), e))
}

/// In-memory table, rendered with RFC 4180 quoting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv emits UTF-8")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display(), e))
    }
}

/// One row per matrix entry: kIndex, row, col, re, im.
pub fn gauge_table(u: &GaugeField) -> Table {
    let mut t = Table::new(["kIndex", "row", "col", "re", "im"]);
    for (k, m) in u.u.iter().enumerate() {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                t.push(vec![k.to_string(), i.to_string(), j.to_string(), fmt_f64(z.re), fmt_f64(z.im)]);
            }
        }
    }
    t
}

/// Sample positions (Cartesian), band, and the complex value with its modulus.
pub fn wannier_table(ws: &WannierSet) -> Table {
    let d = ws.supercell.dim;
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.extend(["band", "re", "im", "abs"].map(String::from));
    let mut t = Table { header, rows: Vec::new() };
    for (a, vals) in ws.values.iter().enumerate() {
        for (idx, z) in vals.iter().enumerate() {
            let x = ws.supercell.position(idx);
            let mut row: Vec<String> = x[..d].iter().map(|&v| fmt_f64(v)).collect();
            row.extend([a.to_string(), fmt_f64(z.re), fmt_f64(z.im), fmt_f64(z.norm())]);
            t.push(row);
        }
    }
    t
}

/// Reads a gauge dump written by [`gauge_table`]. The shape is inferred from the
/// largest indices; every entry must appear exactly once.
pub fn read_gauge_csv<R: Read>(reader: R) -> Result<GaugeField> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header_line = 1;
    let headers = rdr.headers().map_err(|e| Error::Parse { line: header_line, msg: e.to_string() })?.clone();
    let want = ["kIndex", "row", "col", "re", "im"];
    if headers.len() != want.len() || headers.iter().zip(want).any(|(h, w)| h != w) {
        return Err(Error::Parse { line: header_line, msg: format!("expected header {}", want.join(",")) });
    }
    let mut entries = Vec::new();
    let (mut nk, mut m) = (0usize, 0usize);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |what: &str| Error::Parse { line, msg: format!("invalid {what}") };
        let k: usize = rec[0].parse().map_err(|_| bad("kIndex"))?;
        let i: usize = rec[1].parse().map_err(|_| bad("row"))?;
        let j: usize = rec[2].parse().map_err(|_| bad("col"))?;
        let re: f64 = rec[3].parse().map_err(|_| bad("re"))?;
        let im: f64 = rec[4].parse().map_err(|_| bad("im"))?;
        if !re.is_finite() || !im.is_finite() {
            return Err(bad("non-finite value"));
        }
        // Guards the dense allocation below against absurd indices.
        if k >= 1 << 24 || i >= 1 << 10 || j >= 1 << 10 {
            return Err(bad("index (too large)"));
        }
        nk = nk.max(k + 1);
        m = m.max(i + 1).max(j + 1);
        entries.push((line, k, i, j, c(re, im)));
    }
    if entries.len() != nk * m * m {
        return Err(Error::ShapeMismatch(format!("{} entries for {nk} k-points of size {m}", entries.len())));
    }
    let mut u = vec![CMat::zeros(m, m); nk];
    let mut seen = vec![false; nk * m * m];
    for (line, k, i, j, z) in entries {
        let slot = (k * m + i) * m + j;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(Error::Parse { line, msg: format!("duplicate entry ({k}, {i}, {j})") });
        }
        u[k][(i, j)] = z;
    }
    Ok(GaugeField { u })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn json_uses_seventeen_digits() {
        #[derive(Serialize)]
        struct P {
            b: f64,
            a: f64,
        }
        assert_eq!(to_json(&P { b: 0.1, a: f64::NAN }), "{\"b\":1.0000000000000001e-1,\"a\":null}\n");
    }

    #[test]
    fn gauge_round_trip() {
        let u = GaugeField::random(5, 2, 11);
        let back = read_gauge_csv(gauge_table(&u).to_csv().as_bytes()).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn gauge_reader_rejects_gaps_and_duplicates() {
        let head = "kIndex,row,col,re,im\n";
        assert!(matches!(read_gauge_csv(format!("{head}0,0,0,1,0\n0,1,1,1,0\n").as_bytes()), Err(Error::ShapeMismatch(_))));
        let dup = format!("{head}0,0,0,1,0\n0,0,0,1,0\n1,0,0,1,0\n1,0,0,1,0\n");
        assert!(matches!(read_gauge_csv(dup.as_bytes()), Err(Error::ShapeMismatch(_)) | Err(Error::Parse { .. })));
        match read_gauge_csv(format!("{head}0,0,0,x,0\n").as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_quotes_when_needed() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["x,y".into(), "plain".into()]);
        assert_eq!(t.to_csv(), "a,b\n\"x,y\",plain\n");
    }
}
