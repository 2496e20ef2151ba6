//! Matrix exponential by Padé-13 scaling and squaring.

use crate::hilbert::{Operator, C64, ONE, ZERO};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// `exp(a)` for a dense complex matrix.
pub fn expm(a: &Operator) -> Operator {
    let n = a.dim();
    if n == 0 {
        return Operator::zeros(0);
    }
    let norm = a.one_norm();
    if norm == 0.0 {
        return Operator::identity(n);
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.scale_real(0.5f64.powi(s));

    let b = &PADE13;
    let id = Operator::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let lincomb = |terms: &[(&Operator, f64)]| {
        let mut out = Operator::zeros(n);
        for (op, c) in terms {
            for (o, x) in out.data_mut().iter_mut().zip(op.data()) {
                *o += x * c;
            }
        }
        out
    };

    let u_inner = a6.matmul(&lincomb(&[(&a6, b[13]), (&a4, b[11]), (&a2, b[9])]));
    let u_outer = lincomb(&[(&a6, b[7]), (&a4, b[5]), (&a2, b[3]), (&id, b[1])]);
    let u = a.matmul(&(&u_inner + &u_outer));
    let v_inner = a6.matmul(&lincomb(&[(&a6, b[12]), (&a4, b[10]), (&a2, b[8])]));
    let v = &v_inner + &lincomb(&[(&a6, b[6]), (&a4, b[4]), (&a2, b[2]), (&id, b[0])]);

    let mut r = solve(&(&v - &u), &(&v + &u));
    for _ in 0..s {
        r = r.matmul(&r);
    }
    r
}

/// Solves `a · x = b` by LU with partial pivoting.
fn solve(a: &Operator, b: &Operator) -> Operator {
    let n = a.dim();
    let mut lu = a.data().to_vec();
    let mut x = b.data().to_vec();
    for k in 0..n {
        let pivot = (k..n).max_by(|&i, &j| lu[i * n + k].norm().total_cmp(&lu[j * n + k].norm())).unwrap_or(k);
        if pivot != k {
            for c in 0..n {
                lu.swap(k * n + c, pivot * n + c);
                x.swap(k * n + c, pivot * n + c);
            }
        }
        let d = lu[k * n + k];
        let inv = if d == ZERO { ZERO } else { ONE / d };
        for r in k + 1..n {
            let f = lu[r * n + k] * inv;
            if f == ZERO {
                continue;
            }
            lu[r * n + k] = ZERO;
            for c in k + 1..n {
                let t = lu[k * n + c];
                lu[r * n + c] -= f * t;
            }
            for c in 0..n {
                let t = x[k * n + c];
                x[r * n + c] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let d = lu[k * n + k];
        for c in 0..n {
            let mut acc = x[k * n + c];
            for j in k + 1..n {
                acc -= lu[k * n + j] * x[j * n + c];
            }
            x[k * n + c] = acc / d;
        }
    }
    Operator::from_row_major(n, x).expect("square system")
}

/// `exp(−i·h·dt)`: the no-jump step for a constant generator.
pub fn step_exponential(h: &Operator, dt: f64) -> Operator {
    expm(&h.scale(C64::new(0.0, -dt)))
}
