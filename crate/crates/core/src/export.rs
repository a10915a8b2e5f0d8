//! CSV trace export: 9 significant digits, LF line endings.

use std::io::{self, Write};

use crate::polarimeter::{AmplitudeSpectrum, ZeroSpanTrace};

pub const ASD_HEADER: &str = "frequency_hz,asd_mrad_per_rthz";
pub const ZERO_SPAN_HEADER: &str = "time_s,power_db_re_snl";

/// Format with 9 significant digits in scientific notation.
pub fn sig9(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        format!("{x}")
    }
}

pub fn write_rows<W: Write>(mut w: W, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> io::Result<()> {
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    for row in rows {
        let line = row.into_iter().map(sig9).collect::<Vec<_>>().join(",");
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_asd_csv<W: Write>(w: W, psd: &AmplitudeSpectrum) -> io::Result<()> {
    write_rows(w, ASD_HEADER, psd.points().map(|(f, a)| vec![f, a]))
}

pub fn write_zero_span_csv<W: Write>(w: W, trace: &ZeroSpanTrace) -> io::Result<()> {
    write_rows(w, ZERO_SPAN_HEADER, trace.times_s.iter().zip(&trace.power_db).map(|(t, p)| vec![*t, *p]))
}
