use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use super::QuadraticProgram;

/// Writes the problem as labelled dense blocks, one matrix row per line.
pub fn write_debug(qp: &QuadraticProgram, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "# qp nv={} neq={} nin={}", qp.num_vars(), qp.a_eq.nrows(), qp.a_in.nrows())?;
    matrix(out, "H", &qp.hessian)?;
    vector(out, "g", &qp.linear)?;
    matrix(out, "Aeq", &qp.a_eq)?;
    vector(out, "beq", &qp.b_eq)?;
    matrix(out, "Ain", &qp.a_in)?;
    vector(out, "bin", &qp.b_in)?;
    vector(out, "lower", &qp.lower)?;
    vector(out, "upper", &qp.upper)
}

fn matrix(out: &mut impl Write, name: &str, m: &DMatrix<f64>) -> io::Result<()> {
    writeln!(out, "{name} {} {}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

fn vector(out: &mut impl Write, name: &str, v: &DVector<f64>) -> io::Result<()> {
    writeln!(out, "{name} {}", v.len())?;
    let row: Vec<String> = v.iter().map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", row.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_lists_every_block() {
        let qp = QuadraticProgram::new(2).with_hessian(DMatrix::identity(2, 2));
        let mut buf = Vec::new();
        write_debug(&qp, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for tag in ["H 2 2", "g 2", "Aeq 0 2", "lower 2", "upper 2"] {
            assert!(text.contains(tag), "missing {tag}");
        }
        assert!(text.contains("inf"));
    }
}
