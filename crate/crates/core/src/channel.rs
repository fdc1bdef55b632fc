//! Physical model of the controlled reach: equilibrium, characteristic
//! coordinates, gate control laws and the linearized boundary relations of a
//! channel whose true parameters differ from the nominal ones used by the
//! controller.

use crate::error::{Error, Result};

/// Number of uncertain parameters.
pub const PARAM_COUNT: usize = 9;

/// Parameter names in canonical order (the order of every sample matrix and
/// of every report row).
pub const PARAM_NAMES: [&str; PARAM_COUNT] = [
    "h_s", "B", "S_b", "C", "z_up", "xi1_0", "xi2_0", "mu_0", "mu_L",
];

/// One realization of the uncertain parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Height of the fixed part of the downstream overflow gate (m).
    pub h_s: f64,
    /// Channel width (m).
    pub width: f64,
    /// Bottom slope.
    pub bottom_slope: f64,
    /// Friction coefficient.
    pub friction: f64,
    /// Water level upstream of the underflow gate (m).
    pub z_up: f64,
    /// Initial value of the first characteristic (m/s), constant in space.
    pub xi1_0: f64,
    /// Initial value of the second characteristic (m/s), constant in space.
    pub xi2_0: f64,
    /// Upstream gate flow coefficient.
    pub mu_0: f64,
    /// Downstream gate flow coefficient.
    pub mu_l: f64,
}

impl PhysicalParams {
    pub fn reference() -> Self {
        PhysicalParams {
            h_s: 4.0,
            width: 80.0,
            bottom_slope: 2e-4,
            friction: 1e-3,
            z_up: 10.0,
            xi1_0: 0.0,
            xi2_0: 0.0,
            mu_0: 0.65,
            mu_l: 0.65,
        }
    }

    pub fn to_array(&self) -> [f64; PARAM_COUNT] {
        [
            self.h_s,
            self.width,
            self.bottom_slope,
            self.friction,
            self.z_up,
            self.xi1_0,
            self.xi2_0,
            self.mu_0,
            self.mu_l,
        ]
    }

    /// Builds a parameter vector from a slice in canonical order.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != PARAM_COUNT {
            return Err(Error::Domain(format!(
                "expected {PARAM_COUNT} parameters, got {}",
                values.len()
            )));
        }
        Ok(PhysicalParams {
            h_s: values[0],
            width: values[1],
            bottom_slope: values[2],
            friction: values[3],
            z_up: values[4],
            xi1_0: values[5],
            xi2_0: values[6],
            mu_0: values[7],
            mu_l: values[8],
        })
    }

    pub fn get(&self, index: usize) -> f64 {
        self.to_array()[index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        let mut values = self.to_array();
        values[index] = value;
        *self = Self::from_slice(&values).expect("length is fixed");
    }

    /// Checks the sign constraints that do not depend on the equilibrium.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("B", self.width),
            ("C", self.friction),
            ("S_b", self.bottom_slope),
            ("mu_0", self.mu_0),
            ("mu_L", self.mu_l),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {value}")));
            }
        }
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        Ok(())
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// How the downstream gate relation is linearized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DownstreamLinearization {
    /// First-order expansion of the overflow-gate relation around the true
    /// equilibrium depth. Reduces to the nominal reflection law when the true
    /// parameters equal the nominal ones.
    #[default]
    Tangent,
    /// Long closed-form radical expressions for the offset and gain, kept to
    /// reproduce earlier sensitivity studies. They do not vanish at the
    /// nominal point (offset about 19.3 m/s, gain sign flipped).
    Legacy,
}

impl DownstreamLinearization {
    pub fn as_str(&self) -> &'static str {
        match self {
            DownstreamLinearization::Tangent => "tangent",
            DownstreamLinearization::Legacy => "legacy",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "tangent" => Some(DownstreamLinearization::Tangent),
            "legacy" => Some(DownstreamLinearization::Legacy),
            _ => None,
        }
    }
}

/// Nominal values known to the controller plus the fixed physical constants.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalConfig {
    pub nominal: PhysicalParams,
    /// Upstream reflection gain.
    pub k_0: f64,
    /// Downstream reflection gain.
    pub k_l: f64,
    /// Equilibrium flow (m^3/s).
    pub q_star: f64,
    /// Gravity (m/s^2).
    pub g: f64,
    /// Channel length (m).
    pub length: f64,
    /// Time horizon (s).
    pub horizon: f64,
    pub downstream: DownstreamLinearization,
}

impl Default for NominalConfig {
    fn default() -> Self {
        NominalConfig {
            nominal: PhysicalParams::reference(),
            k_0: 0.6,
            k_l: 0.7,
            q_star: 50.0,
            g: 9.81,
            length: 250.0,
            horizon: 75.0,
            downstream: DownstreamLinearization::Tangent,
        }
    }
}

impl NominalConfig {
    pub fn validate(&self) -> Result<()> {
        self.nominal.validate()?;
        for (name, k) in [("k_0", self.k_0), ("k_L", self.k_l)] {
            if !(k.abs() < 1.0) {
                return Err(Error::Domain(format!("|{name}| must be below 1, got {k}")));
            }
        }
        if !(self.q_star > 0.0 && self.g > 0.0 && self.length > 0.0 && self.horizon > 0.0) {
            return Err(Error::Domain(
                "Q_star, g, L and T_star must be positive".into(),
            ));
        }
        let eq = self.nominal_equilibrium()?;
        if self.nominal.z_up <= eq.h_star {
            return Err(Error::Domain(format!(
                "nominal z_up = {} must exceed the nominal equilibrium depth {}",
                self.nominal.z_up, eq.h_star
            )));
        }
        Ok(())
    }

    pub fn nominal_equilibrium(&self) -> Result<Equilibrium> {
        equilibrium_of(&self.nominal, self)
    }

    /// (1 + k_0) / (1 - k_0)
    pub fn upstream_ratio(&self) -> f64 {
        (1.0 + self.k_0) / (1.0 - self.k_0)
    }

    /// (1 + k_L) / (1 - k_L)
    pub fn downstream_ratio(&self) -> f64 {
        (1.0 + self.k_l) / (1.0 - self.k_l)
    }
}

/// Space-independent steady state and the coefficients of the linearized
/// characteristic system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub h_star: f64,
    pub v_star: f64,
    /// Speed of the right-going characteristic.
    pub lambda_1: f64,
    /// Magnitude of the speed of the left-going characteristic.
    pub lambda_2: f64,
    pub gamma: f64,
    pub delta: f64,
    /// sqrt(g / H*), the depth scaling of the characteristic coordinates.
    pub beta: f64,
}

/// Equilibrium of the uniform flow with friction law S_f = C V^2 / H.
pub fn compute_equilibrium(
    bottom_slope: f64,
    friction: f64,
    width: f64,
    q_star: f64,
    g: f64,
) -> Result<Equilibrium> {
    for (name, value) in [
        ("S_b", bottom_slope),
        ("C", friction),
        ("B", width),
        ("Q_star", q_star),
        ("g", g),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {value}")));
        }
    }
    let v_star = (bottom_slope * q_star / (width * friction)).cbrt();
    let h_star = q_star / (width * v_star);
    let celerity_sq = g * h_star;
    if celerity_sq <= v_star * v_star {
        return Err(Error::Domain(format!(
            "flow is not fluvial: g*H* = {celerity_sq} <= V*^2 = {}",
            v_star * v_star
        )));
    }
    let celerity = celerity_sq.sqrt();
    let source = g * friction * v_star * v_star / h_star;
    Ok(Equilibrium {
        h_star,
        v_star,
        lambda_1: v_star + celerity,
        lambda_2: celerity - v_star,
        gamma: source * (1.0 / v_star - 0.5 / celerity),
        delta: source * (1.0 / v_star + 0.5 / celerity),
        beta: (g / h_star).sqrt(),
    })
}

/// Equilibrium for the physical part of a parameter vector.
pub fn equilibrium_of(params: &PhysicalParams, cfg: &NominalConfig) -> Result<Equilibrium> {
    compute_equilibrium(
        params.bottom_slope,
        params.friction,
        params.width,
        cfg.q_star,
        cfg.g,
    )
}

/// Left-hand side of the exponential stability condition; the closed loop is
/// stable when the returned margin is below 1.
pub fn check_stability(k_0: f64, k_l: f64, eq: &Equilibrium) -> f64 {
    let ratio = (eq.lambda_1 * eq.gamma / (eq.lambda_2 * eq.delta)).sqrt();
    (k_0.abs() * ratio).max(k_l.abs() / ratio)
}

/// Depth/velocity deviations to characteristic coordinates.
pub fn to_characteristic(h: f64, v: f64, h_star: f64, g: f64) -> (f64, f64) {
    let beta = (g / h_star).sqrt();
    (v + h * beta, v - h * beta)
}

/// Inverse of [`to_characteristic`].
pub fn from_characteristic(xi1: f64, xi2: f64, h_star: f64, g: f64) -> (f64, f64) {
    let beta = (g / h_star).sqrt();
    ((xi1 - xi2) / (2.0 * beta), 0.5 * (xi1 + xi2))
}

/// x^(2/3) on the real branch, (x^2)^(1/3) >= 0.
pub fn pow_two_thirds(x: f64) -> f64 {
    (x * x).cbrt()
}

/// Linearized boundary relations of the true channel driven by the nominal
/// controller: `v(0) = a + b h(0)` and `v(L) = c + d h(L)`, plus the weights of
/// the corresponding rows in characteristic coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Upstream row: (1 - w0) xi1(0) + w0 xi2(0) = a.
    pub w0: f64,
    /// Downstream row: -wL xi1(L) + (1 + wL) xi2(L) = c.
    pub wl: f64,
    /// sqrt(g / H*) at the true equilibrium.
    pub beta_true: f64,
    /// sqrt(g / H*) at the nominal equilibrium.
    pub beta_nom: f64,
}

impl BoundaryCoefficients {
    /// Gain k such that the homogeneous upstream row reads xi1(0) = k xi2(0).
    pub fn upstream_gain(&self) -> f64 {
        self.w0 / (self.w0 - 1.0)
    }

    /// Gain k such that the homogeneous downstream row reads xi2(L) = k xi1(L).
    pub fn downstream_gain(&self) -> f64 {
        self.wl / (1.0 + self.wl)
    }
}

fn checked_sqrt(value: f64, term: &str) -> Result<f64> {
    if value < 0.0 || !value.is_finite() {
        return Err(Error::Domain(format!(
            "negative or invalid radicand in {term}: {value}"
        )));
    }
    Ok(value.sqrt())
}

/// Boundary coefficients for a channel with parameters `truth`, controlled
/// with the nominal values in `cfg`.
pub fn boundary_coefficients(
    truth: &PhysicalParams,
    cfg: &NominalConfig,
) -> Result<BoundaryCoefficients> {
    truth.validate()?;
    let eq = equilibrium_of(truth, cfg)?;
    let nom_eq = cfg.nominal_equilibrium()?;
    boundary_coefficients_with(truth, &eq, cfg, &nom_eq)
}

pub(crate) fn boundary_coefficients_with(
    truth: &PhysicalParams,
    eq: &Equilibrium,
    cfg: &NominalConfig,
    nom_eq: &Equilibrium,
) -> Result<BoundaryCoefficients> {
    let nom = &cfg.nominal;
    let h = eq.h_star;
    let v = eq.v_star;
    let h_nom = nom_eq.h_star;
    let v_nom = nom_eq.v_star;
    let beta_nom = nom_eq.beta;
    let beta_true = eq.beta;

    if truth.z_up <= h {
        return Err(Error::Domain(format!(
            "z_up = {} must exceed the equilibrium depth H* = {h}",
            truth.z_up
        )));
    }
    if nom.z_up <= h {
        return Err(Error::Domain(format!(
            "nominal z_up = {} must exceed the equilibrium depth H* = {h}",
            nom.z_up
        )));
    }

    // Upstream underflow gate.
    let alpha = cfg.upstream_ratio();
    let level_ratio = checked_sqrt(
        (h - truth.z_up) / (h - nom.z_up),
        "upstream level ratio (H* - z_up)/(H* - z_up,nom)",
    )?;
    let flow_scale = truth.mu_0 / nom.mu_0 * level_ratio;
    let controlled = v_nom - alpha * beta_nom * (h - h_nom);
    let a = flow_scale * controlled - v;
    let b = flow_scale
        * (-alpha * beta_nom
            + (truth.z_up - nom.z_up) * controlled
                / (2.0 * (h - truth.z_up) * (h - nom.z_up)));

    let (c, d) = match cfg.downstream {
        DownstreamLinearization::Tangent => downstream_tangent(truth, eq, cfg, nom_eq)?,
        DownstreamLinearization::Legacy => downstream_legacy(truth, eq, cfg, nom_eq)?,
    };

    let w0 = (b + beta_true) / (2.0 * beta_true);
    let wl = (d - beta_true) / (2.0 * beta_true);
    Ok(BoundaryCoefficients {
        a,
        b,
        c,
        d,
        w0,
        wl,
        beta_true,
        beta_nom,
    })
}

/// Offset and gain from expanding
/// V(L) = sqrt(2g) mu_L / H (e_h + X(H)^(2/3))^(3/2),
/// X(H) = H (V*_nom + alpha_L beta_nom (H - H*_nom)) / (sqrt(2g) mu_L,nom),
/// to first order around H = H*.
fn downstream_tangent(
    truth: &PhysicalParams,
    eq: &Equilibrium,
    cfg: &NominalConfig,
    nom_eq: &Equilibrium,
) -> Result<(f64, f64)> {
    let nom = &cfg.nominal;
    let alpha_l = cfg.downstream_ratio();
    let h = eq.h_star;
    let sqrt_2g = (2.0 * cfg.g).sqrt();
    let slope = alpha_l * nom_eq.beta;

    let x = h * (nom_eq.v_star + slope * (h - nom_eq.h_star)) / (sqrt_2g * nom.mu_l);
    let dx = (nom_eq.v_star + slope * (2.0 * h - nom_eq.h_star)) / (sqrt_2g * nom.mu_l);
    if x == 0.0 {
        return Err(Error::Domain(
            "downstream gate flux vanishes at the equilibrium; gain is unbounded".into(),
        ));
    }
    let head = nom.h_s - truth.h_s + pow_two_thirds(x);
    let root = checked_sqrt(head, "downstream head e_h + X^(2/3)")?;
    let dhead = 2.0 / 3.0 * dx / x.cbrt();
    let k = sqrt_2g * truth.mu_l;
    let c = k * head * root / h - eq.v_star;
    let d = k * (1.5 * root * dhead / h - head * root / (h * h));
    Ok((c, d))
}

/// Closed-form radical expressions for the downstream offset and gain.
fn downstream_legacy(
    truth: &PhysicalParams,
    eq: &Equilibrium,
    cfg: &NominalConfig,
    nom_eq: &Equilibrium,
) -> Result<(f64, f64)> {
    let nom = &cfg.nominal;
    let g = cfg.g;
    let alpha_l = cfg.downstream_ratio();
    let beta_nom = nom_eq.beta;
    let h = eq.h_star;
    let h_nom = nom_eq.h_star;
    let v_nom = nom_eq.v_star;
    let sqrt2 = std::f64::consts::SQRT_2;
    let two_23 = 2f64.powf(2.0 / 3.0);
    let two_16 = 2f64.powf(1.0 / 6.0);

    let core = -v_nom + alpha_l * beta_nom * h_nom;
    if core == 0.0 {
        return Err(Error::Domain("degenerate downstream gain denominator".into()));
    }
    let y23 = pow_two_thirds(-h * core / (g.sqrt() * nom.mu_l));
    let e_h = nom.h_s - truth.h_s;
    let root = checked_sqrt(
        4.0 * e_h + 2.0 * two_23 * y23,
        "downstream radicand 4 e_h + 2^(5/3) Y^(2/3)",
    )?;

    let c = (2.0 * g).sqrt() / 4.0 * truth.mu_l * (2.0 * e_h + two_23 * y23) * root / h;
    let d = -0.5
        * (two_16 * y23 * alpha_l * beta_nom * h - sqrt2 * v_nom * e_h
            + sqrt2 * alpha_l * beta_nom * h_nom * e_h)
        * root
        * truth.mu_l
        * g.sqrt()
        / (core * h * h);
    Ok((c, d))
}

/// Gate positions demanded by the nominal controller for measured depths
/// `h0 = H(0, t)` and `hl = H(L, t)`. The controller only knows nominal
/// values, so every gate coefficient comes from `cfg.nominal`.
pub fn control_positions(h0: f64, hl: f64, cfg: &NominalConfig) -> Result<(f64, f64)> {
    let nom = &cfg.nominal;
    let eq = cfg.nominal_equilibrium()?;
    let g = cfg.g;
    if h0 >= nom.z_up {
        return Err(Error::Domain(format!(
            "upstream depth {h0} must stay below the nominal upstream level {}",
            nom.z_up
        )));
    }
    let u0 = h0 * (eq.v_star - cfg.upstream_ratio() * (h0 - eq.h_star) * eq.beta)
        / (nom.mu_0 * (2.0 * g * (nom.z_up - h0)).sqrt());
    let flux = hl * (eq.v_star + cfg.downstream_ratio() * (hl - eq.h_star) * eq.beta)
        / ((2.0 * g).sqrt() * nom.mu_l);
    let ul = -pow_two_thirds(flux) + hl - nom.h_s;
    Ok((u0, ul))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal_eq() -> Equilibrium {
        compute_equilibrium(2e-4, 1e-3, 80.0, 50.0, 9.81).unwrap()
    }

    #[test]
    fn nominal_equilibrium_values() {
        let eq = nominal_eq();
        assert!((eq.h_star - 1.25).abs() < 1e-12);
        assert!((eq.v_star - 0.5).abs() < 1e-12);
        assert!((eq.lambda_1 - 4.001785).abs() < 1e-6);
        assert!((eq.lambda_2 - 3.001785).abs() < 1e-6);
        assert!((eq.gamma - 3.6439e-3).abs() < 1e-7);
        assert!((eq.delta - 4.2041e-3).abs() < 1e-7);
    }

    #[test]
    fn slope_friction_scaling_invariance() {
        let a = nominal_eq();
        let b = compute_equilibrium(8.0 * 2e-4, 8.0 * 1e-3, 80.0, 50.0, 9.81).unwrap();
        assert!((a.h_star - b.h_star).abs() < 1e-12);
        assert!((a.v_star - b.v_star).abs() < 1e-12);
    }

    #[test]
    fn torrential_flow_is_rejected() {
        let err = compute_equilibrium(0.5, 1e-3, 80.0, 50.0, 9.81).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("fluvial")));
    }

    #[test]
    fn non_positive_inputs_are_rejected() {
        assert!(compute_equilibrium(0.0, 1e-3, 80.0, 50.0, 9.81).is_err());
        assert!(compute_equilibrium(2e-4, -1e-3, 80.0, 50.0, 9.81).is_err());
    }

    #[test]
    fn stability_margins() {
        let eq = nominal_eq();
        assert!((check_stability(0.6, 0.7, &eq) - 0.6512).abs() < 1e-3);
        assert_eq!(check_stability(0.0, 0.0, &eq), 0.0);
        assert!((check_stability(2.0, 0.0, &eq) - 2.1498).abs() < 1e-3);
    }

    #[test]
    fn characteristic_example() {
        let (x1, x2) = to_characteristic(1.0, 0.0, 1.25, 9.81);
        assert!((x1 - 2.8014).abs() < 1e-4);
        assert!((x2 + 2.8014).abs() < 1e-4);
        let (h, v) = from_characteristic(2.8014, -2.8014, 1.25, 9.81);
        assert!((h - 1.0).abs() < 1e-4);
        assert!(v.abs() < 1e-12);
        assert_eq!(to_characteristic(0.0, 0.0, 1.25, 9.81), (0.0, 0.0));
    }

    #[test]
    fn tangent_coefficients_reduce_to_reflection_law() {
        let cfg = NominalConfig::default();
        let bc = boundary_coefficients(&cfg.nominal, &cfg).unwrap();
        assert!(bc.a.abs() <= 1e-12);
        assert!(bc.c.abs() <= 1e-12);
        assert!((bc.upstream_gain() - 0.6).abs() <= 1e-10);
        assert!((bc.downstream_gain() - 0.7).abs() <= 1e-10);
        assert!((bc.w0 - (1.0 - cfg.upstream_ratio()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn legacy_coefficients_do_not_vanish_at_nominal() {
        let cfg = NominalConfig {
            downstream: DownstreamLinearization::Legacy,
            ..NominalConfig::default()
        };
        let bc = boundary_coefficients(&cfg.nominal, &cfg).unwrap();
        assert!(bc.a.abs() <= 1e-12);
        assert!((bc.c - 19.343449800878872).abs() < 1e-9);
        assert!((bc.d + cfg.downstream_ratio() * bc.beta_nom).abs() < 1e-9);
    }

    #[test]
    fn upstream_flow_coefficient_only_touches_upstream_terms() {
        for form in [DownstreamLinearization::Tangent, DownstreamLinearization::Legacy] {
            let cfg = NominalConfig {
                downstream: form,
                ..NominalConfig::default()
            };
            let base = boundary_coefficients(&cfg.nominal, &cfg).unwrap();
            let mut truth = cfg.nominal;
            truth.mu_0 *= 1.1;
            let bumped = boundary_coefficients(&truth, &cfg).unwrap();
            assert_ne!(base.a, bumped.a);
            assert_ne!(base.b, bumped.b);
            assert_eq!(base.c.to_bits(), bumped.c.to_bits());
            assert_eq!(base.d.to_bits(), bumped.d.to_bits());
        }
    }

    #[test]
    fn tangent_gain_matches_finite_difference() {
        // The gain is the derivative of the exact outflow velocity at H*.
        let cfg = NominalConfig::default();
        let mut truth = cfg.nominal;
        truth.h_s = 3.97;
        truth.mu_l = 0.655;
        truth.friction = 1.04e-3;
        let eq = equilibrium_of(&truth, &cfg).unwrap();
        let nom_eq = cfg.nominal_equilibrium().unwrap();
        let bc = boundary_coefficients(&truth, &cfg).unwrap();
        let velocity = |depth: f64| {
            let x = depth
                * (nom_eq.v_star + cfg.downstream_ratio() * nom_eq.beta * (depth - nom_eq.h_star))
                / ((2.0 * cfg.g).sqrt() * cfg.nominal.mu_l);
            let head = cfg.nominal.h_s - truth.h_s + pow_two_thirds(x);
            (2.0 * cfg.g).sqrt() * truth.mu_l / depth * head.powf(1.5)
        };
        let step = 1e-6;
        let fd = (velocity(eq.h_star + step) - velocity(eq.h_star - step)) / (2.0 * step);
        assert!((bc.c - (velocity(eq.h_star) - eq.v_star)).abs() < 1e-12);
        assert!((bc.d - fd).abs() < 1e-6 * fd.abs().max(1.0));
    }

    #[test]
    fn upstream_gain_matches_finite_difference() {
        let cfg = NominalConfig::default();
        let mut truth = cfg.nominal;
        truth.z_up = 10.2;
        truth.mu_0 = 0.64;
        truth.width = 81.0;
        let eq = equilibrium_of(&truth, &cfg).unwrap();
        let nom_eq = cfg.nominal_equilibrium().unwrap();
        let bc = boundary_coefficients(&truth, &cfg).unwrap();
        let velocity = |depth: f64| {
            truth.mu_0 / cfg.nominal.mu_0
                * ((truth.z_up - depth) / (cfg.nominal.z_up - depth)).sqrt()
                * (nom_eq.v_star
                    - cfg.upstream_ratio() * nom_eq.beta * (depth - nom_eq.h_star))
        };
        let step = 1e-6;
        let fd = (velocity(eq.h_star + step) - velocity(eq.h_star - step)) / (2.0 * step);
        assert!((bc.a - (velocity(eq.h_star) - eq.v_star)).abs() < 1e-12);
        assert!((bc.b - fd).abs() < 1e-6 * fd.abs());
    }

    #[test]
    fn low_upstream_level_is_a_domain_error() {
        let cfg = NominalConfig::default();
        let mut truth = cfg.nominal;
        truth.z_up = 1.0;
        assert!(matches!(
            boundary_coefficients(&truth, &cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn equilibrium_gate_positions() {
        let cfg = NominalConfig::default();
        let (u0, ul) = control_positions(1.25, 1.25, &cfg).unwrap();
        assert!((u0 - 0.07339).abs() < 1e-5);
        assert!((ul + 3.1112).abs() < 1e-4);
        let zero_gain = NominalConfig {
            k_0: 0.0,
            ..NominalConfig::default()
        };
        let (u0_zero, _) = control_positions(1.25, 1.25, &zero_gain).unwrap();
        assert!((u0 - u0_zero).abs() < 1e-15);
        assert!(control_positions(10.0, 1.25, &cfg).is_err());
    }
}
