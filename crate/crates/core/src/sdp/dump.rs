//! Plain-text triplet dump of an [`LmiProgram`] for cross-checking with other solvers.
//!
//! ```text
//! lmi-triplets 1
//! dim <m>
//! vars <n>
//! block <name> <rows> <cols> <offset>
//! nonneg <k>
//! A <k> <i> <j> <value>      # k = 0 is the constant term, k >= 1 is variable k - 1; i <= j
//! c <k> <value>              # linear objective, variable k
//! Q <k> <l> <value>          # objective carries 1/2 x'Qx, k <= l
//! const <value>
//! ```
//!
//! Values use the shortest round-trip decimal form.

use std::io::{self, Write};

use super::LmiProgram;
use crate::scalar::Scalar;

pub fn write_triplets<S: Scalar, W: Write>(p: &LmiProgram<S>, mut out: W) -> io::Result<()> {
    writeln!(out, "lmi-triplets 1")?;
    writeln!(out, "dim {}", p.dim())?;
    writeln!(out, "vars {}", p.num_vars())?;
    for b in p.blocks() {
        writeln!(out, "block {} {} {} {}", b.name, b.rows, b.cols, b.offset)?;
    }
    for k in p.nonneg() {
        writeln!(out, "nonneg {k}")?;
    }
    let a0 = p.constant();
    for j in 0..p.dim() {
        for i in 0..=j {
            let v = a0[(i, j)];
            if v != S::zero() {
                writeln!(out, "A 0 {i} {j} {v}")?;
            }
        }
    }
    for k in 0..p.num_vars() {
        for &(i, j, v) in p.coefficients(k) {
            writeln!(out, "A {} {i} {j} {v}", k + 1)?;
        }
    }
    for (k, &v) in p.linear().iter().enumerate() {
        if v != S::zero() {
            writeln!(out, "c {k} {v}")?;
        }
    }
    for &(k, l, v) in p.quadratic() {
        writeln!(out, "Q {k} {l} {v}")?;
    }
    writeln!(out, "const {}", p.objective_constant())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn dump_lists_every_term() {
        let mut p = LmiProgram::<f64>::new(2);
        let l2 = p.add_variable("L2", 1, 1);
        p.set_constant(DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, -2.0]));
        p.add_coefficient(l2.offset, 0, 0, -1.0);
        p.add_linear(l2.offset, 1.0);
        p.require_nonneg(l2.offset);
        let mut buf = Vec::new();
        write_triplets(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected = "lmi-triplets 1\ndim 2\nvars 1\nblock L2 1 1 0\nnonneg 0\n\
                        A 0 0 1 0.5\nA 0 1 1 -2\nA 1 0 0 -1\nc 0 1\nconst 0\n";
        assert_eq!(text, expected);
    }
}
