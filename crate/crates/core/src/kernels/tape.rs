//! A small scalar tape for user-composed covariance functions.
//!
//! Code written against [`Var`] is recorded once into a [`Tape`]. Because the
//! supported operations never branch on values, the same tape replays for
//! any input: a forward sweep gives values (and optionally one tangent), a
//! reverse sweep gives the contraction of the Jacobian with an output
//! cotangent.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{check_cotangent, check_index, check_phi, Covariance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum Op {
    Input(u32),
    Const(f64),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Exp(u32),
    Log(u32),
    Square(u32),
}

/// A recorded straight-line program with designated input and output slots.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    n_inputs: usize,
    outputs: Vec<u32>,
}

/// Records operations performed on [`Var`]s.
pub struct TapeBuilder {
    ops: RefCell<Vec<Op>>,
    values: RefCell<Vec<f64>>,
}

/// Handle to a recorded scalar. Arithmetic on `Var`s appends to the tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    builder: &'t TapeBuilder,
    idx: u32,
}

impl TapeBuilder {
    fn push(&self, op: Op, value: f64) -> u32 {
        let mut ops = self.ops.borrow_mut();
        let idx = u32::try_from(ops.len()).expect("tape exceeds u32 nodes");
        ops.push(op);
        self.values.borrow_mut().push(value);
        idx
    }

    fn value(&self, idx: u32) -> f64 {
        self.values.borrow()[idx as usize]
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        Var {
            builder: self,
            idx: self.push(Op::Const(value), value),
        }
    }

    fn binary<'t>(&'t self, a: u32, b: u32, op: Op) -> Var<'t> {
        let (x, y) = (self.value(a), self.value(b));
        let value = match op {
            Op::Add(..) => x + y,
            Op::Sub(..) => x - y,
            Op::Mul(..) => x * y,
            Op::Div(..) => x / y,
            _ => unreachable!(),
        };
        Var {
            builder: self,
            idx: self.push(op, value),
        }
    }
}

impl<'t> Var<'t> {
    /// Value at the point the tape was recorded.
    pub fn value(&self) -> f64 {
        self.builder.value(self.idx)
    }

    pub fn exp(self) -> Var<'t> {
        let v = self.value().exp();
        Var {
            builder: self.builder,
            idx: self.builder.push(Op::Exp(self.idx), v),
        }
    }

    pub fn ln(self) -> Var<'t> {
        let v = self.value().ln();
        Var {
            builder: self.builder,
            idx: self.builder.push(Op::Log(self.idx), v),
        }
    }

    pub fn square(self) -> Var<'t> {
        let x = self.value();
        Var {
            builder: self.builder,
            idx: self.builder.push(Op::Square(self.idx), x * x),
        }
    }

    fn lift(self, c: f64) -> Var<'t> {
        self.builder.constant(c)
    }
}

macro_rules! binary_ops {
    ($trait:ident, $method:ident, $op:ident) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.builder.binary(self.idx, rhs.idx, Op::$op(self.idx, rhs.idx))
            }
        }
        impl<'t> $trait<f64> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: f64) -> Var<'t> {
                let c = self.lift(rhs);
                self.$method(c)
            }
        }
        impl<'t> $trait<Var<'t>> for f64 {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                rhs.lift(self).$method(rhs)
            }
        }
    };
}

binary_ops!(Add, add, Add);
binary_ops!(Sub, sub, Sub);
binary_ops!(Mul, mul, Mul);
binary_ops!(Div, div, Div);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        0.0 - self
    }
}

impl Tape {
    /// Records `f` at `inputs`. Returns the tape and the output values seen
    /// while recording.
    pub fn record<F>(inputs: &[f64], f: F) -> (Tape, Vec<f64>)
    where
        F: for<'t> FnOnce(&'t TapeBuilder, &[Var<'t>]) -> Vec<Var<'t>>,
    {
        let builder = TapeBuilder {
            ops: RefCell::new(Vec::new()),
            values: RefCell::new(Vec::new()),
        };
        let (outputs, recorded) = {
            let vars: Vec<Var<'_>> = inputs
                .iter()
                .enumerate()
                .map(|(i, &x)| Var {
                    builder: &builder,
                    idx: builder.push(Op::Input(i as u32), x),
                })
                .collect();
            let outs = f(&builder, &vars);
            let idx: Vec<u32> = outs.iter().map(|v| v.idx).collect();
            let vals: Vec<f64> = outs.iter().map(|v| v.value()).collect();
            (idx, vals)
        };
        let tape = Tape {
            ops: builder.ops.into_inner(),
            n_inputs: inputs.len(),
            outputs,
        };
        (tape, recorded)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    fn node_values(&self, inputs: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let x = match *op {
                Op::Input(i) => inputs[i as usize],
                Op::Const(c) => c,
                Op::Add(a, b) => v[a as usize] + v[b as usize],
                Op::Sub(a, b) => v[a as usize] - v[b as usize],
                Op::Mul(a, b) => v[a as usize] * v[b as usize],
                Op::Div(a, b) => v[a as usize] / v[b as usize],
                Op::Exp(a) => f64::exp(v[a as usize]),
                Op::Log(a) => f64::ln(v[a as usize]),
                Op::Square(a) => v[a as usize] * v[a as usize],
            };
            v.push(x);
        }
        v
    }

    /// Forward replay: output values at `inputs`.
    pub fn forward(&self, inputs: &[f64]) -> Vec<f64> {
        let v = self.node_values(inputs);
        self.outputs.iter().map(|&o| v[o as usize]).collect()
    }

    /// One forward-mode sweep: output values and their derivatives along
    /// `direction`.
    pub fn forward_tangent(&self, inputs: &[f64], direction: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut v: Vec<f64> = Vec::with_capacity(self.ops.len());
        let mut d: Vec<f64> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let (x, dx) = match *op {
                Op::Input(i) => (inputs[i as usize], direction[i as usize]),
                Op::Const(c) => (c, 0.0),
                Op::Add(a, b) => (v[a as usize] + v[b as usize], d[a as usize] + d[b as usize]),
                Op::Sub(a, b) => (v[a as usize] - v[b as usize], d[a as usize] - d[b as usize]),
                Op::Mul(a, b) => {
                    let (va, vb) = (v[a as usize], v[b as usize]);
                    (va * vb, d[a as usize] * vb + va * d[b as usize])
                }
                Op::Div(a, b) => {
                    let vb = v[b as usize];
                    let q = v[a as usize] / vb;
                    (q, (d[a as usize] - q * d[b as usize]) / vb)
                }
                Op::Exp(a) => {
                    let e = v[a as usize].exp();
                    (e, e * d[a as usize])
                }
                Op::Log(a) => (v[a as usize].ln(), d[a as usize] / v[a as usize]),
                Op::Square(a) => {
                    let va = v[a as usize];
                    (va * va, 2.0 * va * d[a as usize])
                }
            };
            v.push(x);
            d.push(dx);
        }
        let vals = self.outputs.iter().map(|&o| v[o as usize]).collect();
        let tans = self.outputs.iter().map(|&o| d[o as usize]).collect();
        (vals, tans)
    }

    /// One reverse sweep: `Σ_o adjoint_o ∂out_o/∂input_k` for every input.
    pub fn reverse(&self, inputs: &[f64], output_adjoints: &[f64]) -> Vec<f64> {
        assert_eq!(output_adjoints.len(), self.outputs.len());
        let v = self.node_values(inputs);
        let mut adj = vec![0.0; self.ops.len()];
        for (&o, &g) in self.outputs.iter().zip(output_adjoints) {
            adj[o as usize] += g;
        }
        let mut grad = vec![0.0; self.n_inputs];
        for (k, op) in self.ops.iter().enumerate().rev() {
            let g = adj[k];
            if g == 0.0 {
                continue;
            }
            match *op {
                Op::Input(i) => grad[i as usize] += g,
                Op::Const(_) => {}
                Op::Add(a, b) => {
                    adj[a as usize] += g;
                    adj[b as usize] += g;
                }
                Op::Sub(a, b) => {
                    adj[a as usize] += g;
                    adj[b as usize] -= g;
                }
                Op::Mul(a, b) => {
                    adj[a as usize] += g * v[b as usize];
                    adj[b as usize] += g * v[a as usize];
                }
                Op::Div(a, b) => {
                    let vb = v[b as usize];
                    adj[a as usize] += g / vb;
                    adj[b as usize] -= g * v[k] / vb;
                }
                Op::Exp(a) => adj[a as usize] += g * v[k],
                Op::Log(a) => adj[a as usize] += g / v[a as usize],
                Op::Square(a) => adj[a as usize] += 2.0 * g * v[a as usize],
            }
        }
        grad
    }
}

/// Position of `K[i, j]` (`i ≤ j`) in the row-major packed upper triangle.
pub fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// A covariance defined by recorded scalar code.
///
/// The recording closure receives the hyperparameters and must return the
/// packed upper triangle of `K`, row by row (`K[0,0], K[0,1], …, K[0,n-1],
/// K[1,1], …`); see [`packed_index`].
#[derive(Debug, Clone)]
pub struct TapeKernel {
    tape: Arc<Tape>,
    n: usize,
    names: Vec<String>,
}

impl TapeKernel {
    /// Records the kernel at `phi0`. The tape must not depend on the value
    /// of `phi0` beyond arithmetic (no value-dependent branching).
    pub fn record<F>(n: usize, names: Vec<String>, phi0: &[f64], f: F) -> Result<Self>
    where
        F: for<'t> FnOnce(&'t TapeBuilder, &[Var<'t>]) -> Vec<Var<'t>>,
    {
        if names.len() != phi0.len() {
            return Err(Error::contract("one name per hyperparameter is required"));
        }
        let (tape, _) = Tape::record(phi0, f);
        if tape.n_outputs() != n * (n + 1) / 2 {
            return Err(Error::contract(format!(
                "kernel tape produced {} outputs, expected {} for n = {n}",
                tape.n_outputs(),
                n * (n + 1) / 2
            )));
        }
        Ok(Self {
            tape: Arc::new(tape),
            n,
            names,
        })
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// Squared-exponential kernel `α² exp(−‖x_i − x_j‖²/ρ²)` expressed on the tape.
    pub fn squared_exp(points: &DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        let sq: Vec<f64> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| (points.row(i) - points.row(j)).norm_squared())
            .collect();
        Self::record(n, vec!["alpha".into(), "rho".into()], &[1.0, 1.0], |_, phi| {
            let a2 = phi[0].square();
            let inv_r2 = 1.0 / phi[1].square();
            sq.iter().map(|&d| a2 * (-d * inv_r2).exp()).collect()
        })
    }

    /// The sparse kernel interaction covariance expressed on the tape, with
    /// the same layout as [`super::Skim`].
    pub fn skim(design: &DMatrix<f64>, slab_scale: f64, intercept_sd: f64) -> Result<Self> {
        let (n, p) = design.shape();
        let mut names = vec!["tau".to_string(), "c_aux".to_string(), "chi".to_string()];
        names.extend((0..p).map(|i| format!("lambda[{i}]")));
        let phi0 = vec![1.0; p + 3];
        let s2 = slab_scale * slab_scale;
        let c02 = intercept_sd * intercept_sd;
        Self::record(n, names, &phi0, |b, phi| {
            let t = phi[0].square();
            let g = phi[1] * s2;
            let eta2 = t * phi[2] / g;
            let e = eta2.square();
            let half_e = e * 0.5;
            let v: Vec<Var<'_>> = (0..p)
                .map(|i| {
                    let l = phi[3 + i].square();
                    g * l / (g + t * l)
                })
                .collect();
            let mut out = Vec::with_capacity(n * (n + 1) / 2);
            for r in 0..n {
                for c in r..n {
                    let mut k1 = b.constant(0.0);
                    let mut k2 = b.constant(0.0);
                    for i in 0..p {
                        let xx = design[(r, i)] * design[(c, i)];
                        k1 = k1 + v[i] * xx;
                        k2 = k2 + v[i] * (xx * xx);
                    }
                    let shifted = (k1 + 1.0).square();
                    let k = half_e * shifted - half_e * k2 + (t - e) * k1 + c02 - half_e;
                    out.push(k);
                }
            }
            out
        })
    }

    fn unpack(&self, values: &[f64]) -> Result<DMatrix<f64>> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(
                "kernel tape produced a non-finite entry; check hyperparameter domain",
            ));
        }
        let n = self.n;
        Ok(DMatrix::from_fn(n, n, |i, j| values[packed_index(n, i, j)]))
    }
}

impl Covariance for TapeKernel {
    fn n(&self) -> usize {
        self.n
    }

    fn n_params(&self) -> usize {
        self.tape.n_inputs()
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn evaluate(&self, phi: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_phi(phi, self.n_params())?;
        self.unpack(&self.tape.forward(phi.as_slice()))
    }

    fn pullback(&self, phi: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_phi(phi, self.n_params())?;
        check_cotangent(w, self.n)?;
        let n = self.n;
        let mut adj = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            adj.push(w[(i, i)]);
            for j in i + 1..n {
                adj.push(w[(i, j)] + w[(j, i)]);
            }
        }
        let g = self.tape.reverse(phi.as_slice(), &adj);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("kernel pullback is not finite"));
        }
        Ok(DVector::from_vec(g))
    }

    fn jacobian_slice(&self, phi: &DVector<f64>, j: usize) -> Result<DMatrix<f64>> {
        check_phi(phi, self.n_params())?;
        check_index(j, self.n_params())?;
        let mut dir = vec![0.0; self.n_params()];
        dir[j] = 1.0;
        let (_, tangent) = self.tape.forward_tangent(phi.as_slice(), &dir);
        self.unpack(&tangent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::test_support::*;
    use crate::kernels::{Skim, SquaredExp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn packed_layout() {
        let n = 4;
        let mut expected = 0;
        for i in 0..n {
            for j in i..n {
                assert_eq!(packed_index(n, i, j), expected);
                assert_eq!(packed_index(n, j, i), expected);
                expected += 1;
            }
        }
    }

    #[test]
    fn scalar_ops_differentiate() {
        // f(x, y) = log(x² + y) * exp(x / y) - y
        let f = |x: f64, y: f64| (x * x + y).ln() * (x / y).exp() - y;
        let (tape, recorded) = Tape::record(&[0.7, 1.9], |_, v| {
            vec![(v[0].square() + v[1]).ln() * (v[0] / v[1]).exp() - v[1]]
        });
        assert_eq!(recorded[0], f(0.7, 1.9));
        let at = [1.3, 0.4];
        assert_eq!(tape.forward(&at)[0], f(1.3, 0.4));
        let g = tape.reverse(&at, &[1.0]);
        let h = 1e-6;
        let fx = (f(1.3 + h, 0.4) - f(1.3 - h, 0.4)) / (2.0 * h);
        let fy = (f(1.3, 0.4 + h) - f(1.3, 0.4 - h)) / (2.0 * h);
        assert_rel(g[0], fx, 1e-7);
        assert_rel(g[1], fy, 1e-7);
        let (_, t) = tape.forward_tangent(&at, &[0.0, 1.0]);
        assert_rel(t[0], g[1], 1e-12);
    }

    #[test]
    fn replay_reproduces_recorded_values_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(5, 3, &mut rng);
        let phi0: Vec<f64> = (0..6).map(|_| rng.random_range(0.3..1.5)).collect();
        let (tape, recorded) = Tape::record(&phi0, |b, phi| {
            let mut out = Vec::new();
            for r in 0..5 {
                for c in r..5 {
                    let mut acc = b.constant(0.0);
                    for i in 0..3 {
                        acc = acc + phi[3 + i].square() * (x[(r, i)] * x[(c, i)]);
                    }
                    out.push(phi[0] * (acc / phi[1]).exp() + phi[2]);
                }
            }
            out
        });
        let replay = tape.forward(&phi0);
        assert_eq!(replay.len(), recorded.len());
        for (a, b) in replay.iter().zip(&recorded) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn tape_squared_exp_matches_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let pts = DMatrix::from_fn(4, 2, |_, _| rng.random_range(0.0..2.0));
            let tape = TapeKernel::squared_exp(&pts).unwrap();
            let analytic = SquaredExp::new(&pts).unwrap();
            let phi = DVector::from_vec(vec![rng.random_range(0.3..2.0), rng.random_range(0.3..2.0)]);
            let w = random_symmetric(4, &mut rng);
            let a = analytic.pullback(&phi, &w).unwrap();
            let t = tape.pullback(&phi, &w).unwrap();
            for k in 0..2 {
                assert_rel(a[k], t[k], 1e-12);
            }
            let ka = analytic.evaluate(&phi).unwrap();
            let kt = tape.evaluate(&phi).unwrap();
            assert!((ka - kt).amax() < 1e-14);
        }
    }

    #[test]
    fn tape_skim_matches_analytic_skim() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_matrix(6, 5, &mut rng);
        let tape = TapeKernel::skim(&x, 2.0, 5.0).unwrap();
        let analytic = Skim::new(x, 2.0, 5.0).unwrap();
        let phi = DVector::from_fn(8, |_, _| rng.random_range(0.3..1.5));
        let ka = analytic.evaluate(&phi).unwrap();
        let kt = tape.evaluate(&phi).unwrap();
        assert!((&ka - &kt).amax() <= 1e-12 * ka.amax());
        let w = random_symmetric(6, &mut rng);
        let pa = analytic.pullback(&phi, &w).unwrap();
        let pt = tape.pullback(&phi, &w).unwrap();
        for k in 0..8 {
            assert_rel(pa[k], pt[k], 1e-10);
        }
        for j in [0, 1, 2, 5] {
            let sa = analytic.jacobian_slice(&phi, j).unwrap();
            let st = tape.jacobian_slice(&phi, j).unwrap();
            assert!((&sa - &st).amax() <= 1e-10 * (1.0 + sa.amax()));
        }
    }

    #[test]
    fn unused_input_gives_zero_slice_and_pullback() {
        let pts = DMatrix::from_row_slice(3, 1, &[0.0, 0.5, 1.7]);
        let sq = SquaredExp::new(&pts).unwrap().squared_distances().clone();
        let k = TapeKernel::record(
            3,
            vec!["alpha".into(), "rho".into(), "dummy".into()],
            &[1.0, 1.0, 1.0],
            |_, phi| {
                let mut out = Vec::new();
                for i in 0..3 {
                    for j in i..3 {
                        out.push(phi[0].square() * (-sq[(i, j)] / phi[1].square()).exp());
                    }
                }
                out
            },
        )
        .unwrap();
        let phi = DVector::from_vec(vec![1.2, 0.8, 3.0]);
        assert!(k.jacobian_slice(&phi, 2).unwrap().iter().all(|&v| v == 0.0));
        let w = DMatrix::from_element(3, 3, 1.0);
        assert_eq!(k.pullback(&phi, &w).unwrap()[2], 0.0);
        check_slices(&k, &phi, 1e-6);
        check_elementary_pullbacks(&k, &phi, 1e-6);
    }

    #[test]
    fn wrong_output_count_rejected() {
        let r = TapeKernel::record(2, vec!["a".into()], &[1.0], |_, phi| vec![phi[0]]);
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
