//! Control-homogeneous vector fields for stacked neural ODEs.
//!
//! Every family here satisfies `f(x, αu) = α f(x, u)` for `α > 0`, which is
//! what makes the time-rescaling of controls exact. The state is the stacked
//! vector of all `n` samples (`n·d` entries), and every sample block is driven
//! by the same control.
//!
//! Controls are flat vectors. For the neural forms the layout is the weight
//! matrix `w` in row-major order followed by the bias `b`, so `d_u = d² + d`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    LeakyRelu { a: f64 },
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, s: f64) -> f64 {
        match self {
            Activation::Tanh => s.tanh(),
            Activation::Relu => s.max(0.0),
            Activation::LeakyRelu { a } => {
                if s > 0.0 {
                    s
                } else {
                    a * s
                }
            }
            Activation::Identity => s,
        }
    }

    /// Derivative with the left-limit selection at kinks: `relu'(0) = 0`,
    /// `leaky_relu'(0) = a`.
    #[inline]
    pub fn derivative(self, s: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = s.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { a } => {
                if s > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// `σ(αs) = ασ(s)` for all `α > 0`.
    pub fn is_positively_homogeneous(self) -> bool {
        !matches!(self, Activation::Tanh)
    }

    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu { .. })
    }

    /// Global Lipschitz constant; 1 for every supported kind.
    pub fn lipschitz(self) -> f64 {
        1.0
    }

    fn validate(self) -> Result<()> {
        if let Activation::LeakyRelu { a } = self {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::InvalidArgument(format!(
                    "leaky_relu slope must lie in [0, 1), got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// Free-function form of [`Activation::derivative`].
pub fn activation_deriv(kind: Activation, s: f64) -> f64 {
    kind.derivative(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    /// `f(x_i, u) = w σ(x_i) + b`
    #[serde(rename = "inside")]
    InsideSigma,
    /// `f(x_i, u) = σ(w x_i + b)`, requires a positively homogeneous σ.
    #[serde(rename = "outside")]
    OutsideSigma,
    /// `f(x, u) = Σ_j u_j (A_j x + c_j)` on the full stacked state.
    #[serde(rename = "driftless")]
    DriftlessAffine,
}

/// An affine vector field `x ↦ A x + c` on the stacked state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineField {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

impl AffineField {
    fn eval_into(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for ((row, &c), o) in self.a.iter().zip(&self.c).zip(out.iter_mut()) {
            let ax: f64 = row.iter().zip(x).map(|(a, x)| a * x).sum();
            *o += scale * (ax + c);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
struct RawSpec {
    form: Form,
    d: usize,
    n: usize,
    #[serde(default = "default_activation")]
    activation: Activation,
    #[serde(default)]
    fields: Vec<AffineField>,
}

fn default_activation() -> Activation {
    Activation::Identity
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct DynamicsSpec {
    form: Form,
    d: usize,
    n: usize,
    activation: Activation,
    fields: Vec<AffineField>,
}

impl TryFrom<RawSpec> for DynamicsSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let spec = DynamicsSpec {
            form: raw.form,
            d: raw.d,
            n: raw.n,
            activation: raw.activation,
            fields: raw.fields,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl DynamicsSpec {
    pub fn inside(d: usize, n: usize, activation: Activation) -> Result<Self> {
        RawSpec {
            form: Form::InsideSigma,
            d,
            n,
            activation,
            fields: Vec::new(),
        }
        .try_into()
    }

    pub fn outside(d: usize, n: usize, activation: Activation) -> Result<Self> {
        RawSpec {
            form: Form::OutsideSigma,
            d,
            n,
            activation,
            fields: Vec::new(),
        }
        .try_into()
    }

    pub fn driftless(d: usize, n: usize, fields: Vec<AffineField>) -> Result<Self> {
        RawSpec {
            form: Form::DriftlessAffine,
            d,
            n,
            activation: Activation::Identity,
            fields,
        }
        .try_into()
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::InvalidArgument(format!(
                "state dimensions must be positive, got d={} n={}",
                self.d, self.n
            )));
        }
        self.activation.validate()?;
        match self.form {
            Form::InsideSigma => {}
            Form::OutsideSigma => {
                if !self.activation.is_positively_homogeneous() {
                    return Err(Error::InvalidArgument(
                        "outside-sigma dynamics need a positively 1-homogeneous activation \
                         (relu, leaky_relu or identity)"
                            .into(),
                    ));
                }
            }
            Form::DriftlessAffine => {
                if self.fields.is_empty() {
                    return Err(Error::InvalidArgument(
                        "driftless dynamics need at least one field".into(),
                    ));
                }
                let dx = self.state_dim();
                for field in &self.fields {
                    check_len("driftless field offset", dx, field.c.len())?;
                    check_len("driftless field rows", dx, field.a.len())?;
                    for row in &field.a {
                        check_len("driftless field columns", dx, row.len())?;
                    }
                    let finite = field
                        .c
                        .iter()
                        .chain(field.a.iter().flatten())
                        .all(|v| v.is_finite());
                    if !finite {
                        return Err(Error::InvalidArgument(
                            "driftless field has non-finite entries".into(),
                        ));
                    }
                }
            }
        }
        if self.form != Form::DriftlessAffine && !self.fields.is_empty() {
            return Err(Error::InvalidArgument(
                "affine fields are only meaningful for driftless dynamics".into(),
            ));
        }
        Ok(())
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn fields(&self) -> &[AffineField] {
        &self.fields
    }

    /// `d_x = n·d`.
    pub fn state_dim(&self) -> usize {
        self.n * self.d
    }

    pub fn control_dim(&self) -> usize {
        match self.form {
            Form::InsideSigma | Form::OutsideSigma => self.d * self.d + self.d,
            Form::DriftlessAffine => self.fields.len(),
        }
    }

    pub fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        check_len("state", self.state_dim(), x.len())?;
        check_len("control", self.control_dim(), u.len())
    }

    pub fn eval_field(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        let mut out = vec![0.0; x.len()];
        self.field_into(x, u, &mut out);
        Ok(out)
    }

    /// Writes `f(x, u)` into `out` without checking dimensions.
    pub(crate) fn field_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let d = self.d;
        let sigma = self.activation;
        match self.form {
            Form::InsideSigma => {
                let (w, b) = u.split_at(d * d);
                let mut s = vec![0.0; d];
                for (xi, oi) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    for (sc, &xc) in s.iter_mut().zip(xi) {
                        *sc = sigma.apply(xc);
                    }
                    for r in 0..d {
                        let row = &w[r * d..(r + 1) * d];
                        oi[r] = row.iter().zip(&s).map(|(w, s)| w * s).sum::<f64>() + b[r];
                    }
                }
            }
            Form::OutsideSigma => {
                let (w, b) = u.split_at(d * d);
                for (xi, oi) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    for r in 0..d {
                        let row = &w[r * d..(r + 1) * d];
                        let z = row.iter().zip(xi).map(|(w, x)| w * x).sum::<f64>() + b[r];
                        oi[r] = sigma.apply(z);
                    }
                }
            }
            Form::DriftlessAffine => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (field, &uj) in self.fields.iter().zip(u) {
                    if uj != 0.0 {
                        field.eval_into(x, uj, out);
                    }
                }
            }
        }
    }

    /// Vector-Jacobian product: accumulates `scale·(∂f/∂x)ᵀλ` into `gx` and
    /// `scale·(∂f/∂u)ᵀλ` into `gu`.
    pub(crate) fn pullback(
        &self,
        x: &[f64],
        u: &[f64],
        lam: &[f64],
        scale: f64,
        gx: &mut [f64],
        gu: &mut [f64],
    ) {
        let d = self.d;
        let sigma = self.activation;
        match self.form {
            Form::InsideSigma => {
                let (w, _) = u.split_at(d * d);
                let (gw, gb) = gu.split_at_mut(d * d);
                let mut s = vec![0.0; d];
                let mut ds = vec![0.0; d];
                for ((xi, li), gxi) in x
                    .chunks_exact(d)
                    .zip(lam.chunks_exact(d))
                    .zip(gx.chunks_exact_mut(d))
                {
                    if li.iter().all(|&l| l == 0.0) {
                        continue;
                    }
                    for c in 0..d {
                        s[c] = sigma.apply(xi[c]);
                        ds[c] = sigma.derivative(xi[c]);
                    }
                    for r in 0..d {
                        let l = scale * li[r];
                        if l == 0.0 {
                            continue;
                        }
                        gb[r] += l;
                        let row = &w[r * d..(r + 1) * d];
                        let grow = &mut gw[r * d..(r + 1) * d];
                        for c in 0..d {
                            grow[c] += l * s[c];
                            gxi[c] += l * row[c] * ds[c];
                        }
                    }
                }
            }
            Form::OutsideSigma => {
                let (w, b) = u.split_at(d * d);
                let (gw, gb) = gu.split_at_mut(d * d);
                for ((xi, li), gxi) in x
                    .chunks_exact(d)
                    .zip(lam.chunks_exact(d))
                    .zip(gx.chunks_exact_mut(d))
                {
                    for r in 0..d {
                        let row = &w[r * d..(r + 1) * d];
                        let z = row.iter().zip(xi).map(|(w, x)| w * x).sum::<f64>() + b[r];
                        let mu = scale * li[r] * sigma.derivative(z);
                        if mu == 0.0 {
                            continue;
                        }
                        gb[r] += mu;
                        let grow = &mut gw[r * d..(r + 1) * d];
                        for c in 0..d {
                            grow[c] += mu * xi[c];
                            gxi[c] += mu * row[c];
                        }
                    }
                }
            }
            Form::DriftlessAffine => {
                for ((field, &uj), guj) in self.fields.iter().zip(u).zip(gu.iter_mut()) {
                    let mut dot = 0.0;
                    for (r, (row, &c)) in field.a.iter().zip(&field.c).enumerate() {
                        let ax: f64 = row.iter().zip(x).map(|(a, x)| a * x).sum();
                        dot += lam[r] * (ax + c);
                        let l = scale * uj * lam[r];
                        if l != 0.0 {
                            for (g, a) in gx.iter_mut().zip(row) {
                                *g += l * a;
                            }
                        }
                    }
                    *guj += scale * dot;
                }
            }
        }
    }

    /// Smallest distance of any activation argument to a kink of σ, or
    /// infinity when σ is smooth or the form has no activation.
    pub fn kink_gap(&self, x: &[f64], u: &[f64]) -> f64 {
        if !self.activation.has_kink() {
            return f64::INFINITY;
        }
        let d = self.d;
        match self.form {
            Form::InsideSigma => x.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())),
            Form::OutsideSigma => {
                let (w, b) = u.split_at(d * d);
                let mut gap = f64::INFINITY;
                for xi in x.chunks_exact(d) {
                    for r in 0..d {
                        let row = &w[r * d..(r + 1) * d];
                        let z = row.iter().zip(xi).map(|(w, x)| w * x).sum::<f64>() + b[r];
                        gap = gap.min(z.abs());
                    }
                }
                gap
            }
            Form::DriftlessAffine => f64::INFINITY,
        }
    }

    /// Max-abs deviation `|f(x, αu) − α f(x, u)|`.
    pub fn check_homogeneity(&self, x: &[f64], u: &[f64], alpha: f64) -> Result<f64> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "homogeneity scale must be positive, got {alpha}"
            )));
        }
        let base = self.eval_field(x, u)?;
        let scaled_u: Vec<f64> = u.iter().map(|v| alpha * v).collect();
        let scaled = self.eval_field(x, &scaled_u)?;
        Ok(base
            .iter()
            .zip(&scaled)
            .map(|(b, s)| (s - alpha * b).abs())
            .fold(0.0, f64::max))
    }

    /// Splits a neural-form control into `(w, b)`; `w` is row-major `d×d`.
    pub fn split_control<'a>(&self, u: &'a [f64]) -> Option<(&'a [f64], &'a [f64])> {
        match self.form {
            Form::DriftlessAffine => None,
            _ => Some(u.split_at(self.d * self.d)),
        }
    }
}

/// `‖u‖₁`: the entrywise 1-norm over all control coordinates.
pub fn l1_norm(u: &[f64]) -> f64 {
    u.iter().map(|v| v.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-scale..scale)).collect()
    }

    // Per-sample loop straight from the component formula.
    fn naive_inside(d: usize, sigma: Activation, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for i in 0..x.len() / d {
            for r in 0..d {
                let mut acc = u[d * d + r];
                for c in 0..d {
                    acc += u[r * d + c] * sigma.apply(x[i * d + c]);
                }
                out[i * d + r] = acc;
            }
        }
        out
    }

    #[test]
    fn inside_scalar_tanh_at_origin() {
        let spec = DynamicsSpec::inside(1, 1, Activation::Tanh).unwrap();
        let f = spec.eval_field(&[0.0], &[2.0, 1.0]).unwrap();
        assert_eq!(f, vec![1.0]);
    }

    #[test]
    fn zero_control_gives_zero_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = [
            DynamicsSpec::inside(3, 4, Activation::Tanh).unwrap(),
            DynamicsSpec::outside(3, 4, Activation::LeakyRelu { a: 0.2 }).unwrap(),
            DynamicsSpec::driftless(
                2,
                1,
                vec![AffineField {
                    a: vec![vec![1.0, 2.0], vec![0.0, -1.0]],
                    c: vec![0.5, 0.0],
                }],
            )
            .unwrap(),
        ];
        for spec in &specs {
            let x = random_vec(&mut rng, spec.state_dim(), 3.0);
            let u = vec![0.0; spec.control_dim()];
            assert!(spec.eval_field(&x, &u).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn inside_matches_per_sample_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sigma in [Activation::Tanh, Activation::Relu, Activation::Identity] {
            let spec = DynamicsSpec::inside(2, 5, sigma).unwrap();
            let x = random_vec(&mut rng, 10, 2.0);
            let u = random_vec(&mut rng, 6, 1.5);
            let fast = spec.eval_field(&x, &u).unwrap();
            let slow = naive_inside(2, sigma, &x, &u);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = DynamicsSpec::inside(2, 3, Activation::Tanh).unwrap();
        assert!(matches!(
            spec.eval_field(&[0.0; 5], &[0.0; 6]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            spec.eval_field(&[0.0; 6], &[0.0; 4]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn outside_rejects_tanh() {
        assert!(DynamicsSpec::outside(2, 1, Activation::Tanh).is_err());
        assert!(DynamicsSpec::outside(2, 1, Activation::Relu).is_ok());
        assert!(DynamicsSpec::inside(2, 1, Activation::LeakyRelu { a: 1.0 }).is_err());
    }

    #[test]
    fn control_dims() {
        assert_eq!(
            DynamicsSpec::inside(3, 7, Activation::Tanh)
                .unwrap()
                .control_dim(),
            12
        );
        let f = AffineField {
            a: vec![vec![0.0]],
            c: vec![1.0],
        };
        let spec = DynamicsSpec::driftless(1, 1, vec![f.clone(), f]).unwrap();
        assert_eq!(spec.control_dim(), 2);
    }

    #[test]
    fn derivative_conventions() {
        assert_eq!(activation_deriv(Activation::Tanh, 0.0), 1.0);
        assert_eq!(activation_deriv(Activation::Relu, -1.0), 0.0);
        assert_eq!(activation_deriv(Activation::Relu, 0.0), 0.0);
        assert_eq!(
            activation_deriv(Activation::LeakyRelu { a: 0.1 }, -2.0),
            0.1
        );
        assert_eq!(activation_deriv(Activation::LeakyRelu { a: 0.1 }, 0.0), 0.1);
    }

    #[test]
    fn homogeneity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inside = DynamicsSpec::inside(3, 2, Activation::Tanh).unwrap();
        let x = random_vec(&mut rng, 6, 2.0);
        let u = random_vec(&mut rng, 12, 2.0);
        assert!(inside.check_homogeneity(&x, &u, 3.0).unwrap() <= 1e-12);
        assert_eq!(inside.check_homogeneity(&x, &u, 1.0).unwrap(), 0.0);
        let outside = DynamicsSpec::outside(3, 2, Activation::Relu).unwrap();
        assert!(outside.check_homogeneity(&x, &u, 0.5).unwrap() <= 1e-12);
        assert!(inside.check_homogeneity(&x, &u, 0.0).is_err());
        assert!(inside.check_homogeneity(&x, &u, -1.0).is_err());
    }

    #[test]
    fn block_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = DynamicsSpec::outside(2, 3, Activation::LeakyRelu { a: 0.3 }).unwrap();
        let x = random_vec(&mut rng, 6, 2.0);
        let u = random_vec(&mut rng, 6, 2.0);
        let base = spec.eval_field(&x, &u).unwrap();
        let mut bumped = x.clone();
        bumped[2] += 0.7;
        let f = spec.eval_field(&bumped, &u).unwrap();
        assert_eq!(&f[..2], &base[..2]);
        assert_eq!(&f[4..], &base[4..]);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let json = r#"{"form":"outside","d":2,"n":3,"activation":{"kind":"leaky_relu","a":0.1}}"#;
        let spec: DynamicsSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.activation(), Activation::LeakyRelu { a: 0.1 });
        let back: DynamicsSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"form":"outside","d":2,"n":3,"activation":{"kind":"tanh"}}"#;
        assert!(serde_json::from_str::<DynamicsSpec>(bad).is_err());
        let drift = r#"{"form":"driftless","d":1,"n":1,"fields":[{"a":[[0.0]],"c":[1.0]}]}"#;
        let spec: DynamicsSpec = serde_json::from_str(drift).unwrap();
        assert_eq!(spec.control_dim(), 1);
    }

    fn admitted_specs() -> Vec<DynamicsSpec> {
        vec![
            DynamicsSpec::inside(2, 3, Activation::Tanh).unwrap(),
            DynamicsSpec::inside(2, 3, Activation::Relu).unwrap(),
            DynamicsSpec::outside(2, 3, Activation::Relu).unwrap(),
            DynamicsSpec::outside(2, 3, Activation::LeakyRelu { a: 0.25 }).unwrap(),
            DynamicsSpec::outside(2, 3, Activation::Identity).unwrap(),
            DynamicsSpec::driftless(
                2,
                1,
                vec![
                    AffineField {
                        a: vec![vec![0.0, -1.0], vec![1.0, 0.0]],
                        c: vec![0.0, 0.0],
                    },
                    AffineField {
                        a: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                        c: vec![1.0, 0.0],
                    },
                ],
            )
            .unwrap(),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn homogeneous_for_every_admitted_spec(
            seed in any::<u64>(),
            alpha in 1e-3f64..10.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for spec in admitted_specs() {
                let x = random_vec(&mut rng, spec.state_dim(), 3.0);
                let u = random_vec(&mut rng, spec.control_dim(), 3.0);
                let dev = spec.check_homogeneity(&x, &u, alpha).unwrap();
                prop_assert!(dev <= 1e-10, "deviation {dev} for {:?}", spec.form());
            }
        }
    }
}
