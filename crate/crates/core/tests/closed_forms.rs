use std::ops::{Add, Div, Mul, Sub};

use ecfam::asymptotics::{i2_i3_closed, Scalar};
use num_rational::Ratio;

#[derive(Clone, Debug, PartialEq)]
struct Q(Ratio<i128>);

impl Add for Q {
    type Output = Q;
    fn add(self, o: Q) -> Q {
        Q(self.0 + o.0)
    }
}
impl Sub for Q {
    type Output = Q;
    fn sub(self, o: Q) -> Q {
        Q(self.0 - o.0)
    }
}
impl Mul for Q {
    type Output = Q;
    fn mul(self, o: Q) -> Q {
        Q(self.0 * o.0)
    }
}
impl Div for Q {
    type Output = Q;
    fn div(self, o: Q) -> Q {
        Q(self.0 / o.0)
    }
}
impl Scalar for Q {
    fn from_int(n: i64) -> Self {
        Q(Ratio::from_integer(n as i128))
    }
}

fn q(n: i128, d: i128) -> Q {
    Q(Ratio::new(n, d))
}

fn pow(x: &Q, e: u32) -> Q {
    (0..e).fold(Q::from_int(1), |a, _| a * x.clone())
}

fn fact(n: u32) -> i64 {
    (1..=n as i64).product()
}

#[test]
fn equal_lengths_reduce_to_single_powers() {
    for (bn, bd) in [(1, 3), (2, 7), (5, 11)] {
        for (ln, ld) in [(9, 1), (23, 2), (1, 5)] {
            for j1 in 1..=4u32 {
                for j2 in 1..=4u32 {
                    let b = q(bn, bd);
                    let l = q(ln, ld);
                    let logm = b.clone() * l.clone();
                    let (i2, i3) = i2_i3_closed(b.clone(), b.clone(), j1, j2, l).unwrap();
                    let want2 = pow(&logm, j1 + j2 - 1)
                        / Q::from_int(fact(j1 - 1) * fact(j2 - 1) * (j1 + j2 - 1) as i64);
                    let want3 = pow(&logm, j1 + j2) / Q::from_int(fact(j1) * fact(j2));
                    assert_eq!(i2, want2, "j = ({j1}, {j2})");
                    assert_eq!(i3, want3, "j = ({j1}, {j2})");
                }
            }
        }
    }
}

#[test]
fn unit_second_order_ignores_the_longer_length() {
    for j1 in 1..=5u32 {
        let l = q(17, 3);
        let b1 = q(1, 4);
        let (a, _) = i2_i3_closed(b1.clone(), q(1, 3), j1, 1, l.clone()).unwrap();
        let (b, _) = i2_i3_closed(b1.clone(), q(9, 10), j1, 1, l.clone()).unwrap();
        assert_eq!(a, b);
        let want = pow(&(b1 * l), j1) / Q::from_int(fact(j1 - 1) * j1 as i64);
        assert_eq!(a, want);
    }
}

#[test]
fn rational_and_float_evaluations_agree() {
    let (r2, r3) = i2_i3_closed(q(1, 5), q(1, 2), 2, 3, q(14, 1)).unwrap();
    let (f2, f3) = i2_i3_closed(0.2, 0.5, 2, 3, 14.0).unwrap();
    let to_f = |x: &Q| *x.0.numer() as f64 / *x.0.denom() as f64;
    assert!((to_f(&r2) - f2).abs() < 1e-12 * f2.abs());
    assert!((to_f(&r3) - f3).abs() < 1e-12 * f3.abs());
}
