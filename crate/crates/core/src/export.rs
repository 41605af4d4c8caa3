//! Number formatting and small CSV helpers shared by the dump functions.

use std::io::{self, Write};

/// Significant digits used for every number written to CSV.
pub const SIG_DIGITS: usize = 12;

/// Formats `v` with exactly 12 significant digits, '.' as decimal separator.
///
/// Plain notation is used for exponents in `[-5, 12)`, scientific otherwise.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        format!("{:.*}", decimals, v)
    } else {
        sci
    }
}

/// Writes a header row followed by numeric rows.
pub fn write_rows<W: Write>(mut out: W, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| fmt_sig(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(1.0), "1.00000000000");
        assert_eq!(fmt_sig(0.0582), "0.0582000000000");
        assert_eq!(fmt_sig(-123.456), "-123.456000000");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1e-9), "1.00000000000e-9");
        assert_eq!(fmt_sig(2.5e15), "2.50000000000e15");
        // rounding that bumps the exponent
        assert_eq!(fmt_sig(9.9999999999999), "10.0000000000");
    }
}
