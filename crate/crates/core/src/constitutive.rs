//! Incompressible Ogden hyperelastic model.
//!
//! The strain-energy density is
//!
//! ```text
//! W = sum_k (mu_k / alpha_k) (l1^a_k + l2^a_k + l3^a_k - 3),    l1 l2 l3 = 1,
//! ```
//!
//! with principal Cauchy stresses `sigma_i = sum_k mu_k l_i^a_k - q`, where
//! `q` is the hydrostatic pressure fixed by the traction-free boundary of
//! each load case. Stresses are in kPa throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Poisson ratio of an isotropic incompressible material.
pub const INCOMPRESSIBLE_NU: f64 = 0.5;

/// Each term must satisfy `mu_k * alpha_k > 0`; products closer to zero than
/// this are rejected at construction.
pub const MU_ALPHA_MIN_PRODUCT: f64 = 1e-12;

const VOLUME_TOL: f64 = 1e-9;

/// One `(mu_k, alpha_k)` pair of the Ogden series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OgdenTerm {
    pub mu_kpa: f64,
    pub alpha: f64,
}

/// Validated Ogden material parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOgdenParameters")]
pub struct OgdenParameters {
    material: String,
    terms: Vec<OgdenTerm>,
    nu: f64,
}

#[derive(Deserialize)]
struct RawOgdenParameters {
    material: String,
    terms: Vec<OgdenTerm>,
    nu: f64,
}

impl TryFrom<RawOgdenParameters> for OgdenParameters {
    type Error = Error;

    fn try_from(raw: RawOgdenParameters) -> Result<Self> {
        OgdenParameters::new(raw.material, raw.terms, raw.nu)
    }
}

impl OgdenParameters {
    /// Build a parameter set, enforcing `K >= 1`, finite coefficients,
    /// `mu_k * alpha_k > 0` and a physically meaningful Poisson ratio.
    pub fn new(material: impl Into<String>, terms: Vec<OgdenTerm>, nu: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::domain("Ogden model needs at least one term"));
        }
        for (k, t) in terms.iter().enumerate() {
            if !t.mu_kpa.is_finite() || !t.alpha.is_finite() {
                return Err(Error::domain(format!("term {k}: non-finite coefficient")));
            }
            if t.mu_kpa * t.alpha <= MU_ALPHA_MIN_PRODUCT {
                return Err(Error::domain(format!(
                    "term {k}: mu*alpha = {:.3e} violates mu_k*alpha_k > 0",
                    t.mu_kpa * t.alpha
                )));
            }
        }
        if !(nu > 0.0 && nu <= 0.5) {
            return Err(Error::domain(format!("Poisson ratio {nu} outside (0, 0.5]")));
        }
        Ok(Self {
            material: material.into(),
            terms,
            nu,
        })
    }

    /// Incompressible parameter set (`nu = 0.5`).
    pub fn incompressible(material: impl Into<String>, terms: Vec<OgdenTerm>) -> Result<Self> {
        Self::new(material, terms, INCOMPRESSIBLE_NU)
    }

    pub fn material(&self) -> &str {
        &self.material
    }

    pub fn terms(&self) -> &[OgdenTerm] {
        &self.terms
    }

    /// Model order K.
    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameter serialization cannot fail")
    }

    fn ensure_incompressible(&self) -> Result<()> {
        if self.nu != INCOMPRESSIBLE_NU {
            return Err(Error::domain(format!(
                "incompressible stress formulas require nu = 0.5, got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

/// Bundled parameter sets of the two characterized elastomers.
pub mod materials {
    use super::OgdenParameters;

    /// Soft particle-carrier gel (order-2 Ogden fit).
    pub fn ecoflex_gel() -> OgdenParameters {
        OgdenParameters::from_json(include_str!("../data/ecoflex_gel.json"))
            .expect("bundled Ecoflex GEL parameters are valid")
    }

    /// Stiff top-layer silicone, 25:1 mixing ratio (order-2 Ogden fit).
    pub fn elastosil_25_1() -> OgdenParameters {
        OgdenParameters::from_json(include_str!("../data/elastosil_25_1.json"))
            .expect("bundled Elastosil 25:1 parameters are valid")
    }
}

/// Volume-preserving principal stretch triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalStretchState {
    lambda: [f64; 3],
}

impl PrincipalStretchState {
    /// Validate an explicit triple: all stretches positive and
    /// `|l1*l2*l3 - 1| <= 1e-9`.
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        for (i, l) in [lambda1, lambda2, lambda3].iter().enumerate() {
            if !(l.is_finite() && *l > 0.0) {
                return Err(Error::domain(format!("stretch lambda{} = {l} must be > 0", i + 1)));
            }
        }
        let volume = lambda1 * lambda2 * lambda3;
        if (volume - 1.0).abs() > VOLUME_TOL {
            return Err(Error::domain(format!(
                "stretches violate incompressibility: l1*l2*l3 = {volume}"
            )));
        }
        Ok(Self {
            lambda: [lambda1, lambda2, lambda3],
        })
    }

    /// Build from the two in-plane stretches; the thickness stretch is
    /// `1/(l1*l2)` so the state is incompressible by construction.
    pub fn from_in_plane(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (i, l) in [lambda1, lambda2].iter().enumerate() {
            if !(l.is_finite() && *l > 0.0) {
                return Err(Error::domain(format!("stretch lambda{} = {l} must be > 0", i + 1)));
            }
        }
        Ok(Self {
            lambda: [lambda1, lambda2, 1.0 / (lambda1 * lambda2)],
        })
    }

    pub fn identity() -> Self {
        Self { lambda: [1.0; 3] }
    }

    pub fn stretches(&self) -> [f64; 3] {
        self.lambda
    }
}

/// The three characterization load cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoadCase {
    /// Uniaxial tension: `(l, l^-1/2, l^-1/2)`.
    #[serde(rename = "ua")]
    Uniaxial,
    /// Pure shear: `(l, 1, l^-1)`.
    #[serde(rename = "ps")]
    PureShear,
    /// Equibiaxial tension: `(l, l, l^-2)`.
    #[serde(rename = "eb")]
    Equibiaxial,
}

impl LoadCase {
    pub const ALL: [LoadCase; 3] = [LoadCase::Uniaxial, LoadCase::PureShear, LoadCase::Equibiaxial];

    pub fn tag(&self) -> &'static str {
        match self {
            LoadCase::Uniaxial => "ua",
            LoadCase::PureShear => "ps",
            LoadCase::Equibiaxial => "eb",
        }
    }
}

impl std::str::FromStr for LoadCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ua" | "uniaxial" => Ok(LoadCase::Uniaxial),
            "ps" | "pure-shear" | "pureshear" => Ok(LoadCase::PureShear),
            "eb" | "equibiaxial" => Ok(LoadCase::Equibiaxial),
            other => Err(Error::config(format!(
                "unknown load case '{other}' (expected ua, ps or eb)"
            ))),
        }
    }
}

impl std::fmt::Display for LoadCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Stress state of one load case at a given stretch.
///
/// `q_kpa` is kept so the principal-stress formula can be re-checked against
/// the stored `sigma_kpa` components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCaseEvaluation {
    pub case: LoadCase,
    pub state: PrincipalStretchState,
    pub q_kpa: f64,
    pub sigma_kpa: [f64; 3],
}

/// Strain-energy density in kPa for a principal stretch state.
pub fn strain_energy(params: &OgdenParameters, state: &PrincipalStretchState) -> Result<f64> {
    params.ensure_incompressible()?;
    let [l1, l2, l3] = state.stretches();
    let w = params
        .terms
        .iter()
        .map(|t| t.mu_kpa / t.alpha * (l1.powf(t.alpha) + l2.powf(t.alpha) + l3.powf(t.alpha) - 3.0))
        .sum();
    Ok(w)
}

/// Principal Cauchy stresses for a given hydrostatic pressure `q`.
pub fn principal_stresses(
    params: &OgdenParameters,
    state: &PrincipalStretchState,
    q_kpa: f64,
) -> Result<[f64; 3]> {
    params.ensure_incompressible()?;
    if !q_kpa.is_finite() {
        return Err(Error::domain(format!("hydrostatic pressure {q_kpa} must be finite")));
    }
    let mut sigma = [0.0; 3];
    for (i, l) in state.stretches().iter().enumerate() {
        sigma[i] = params
            .terms
            .iter()
            .map(|t| t.mu_kpa * l.powf(t.alpha))
            .sum::<f64>()
            - q_kpa;
    }
    Ok(sigma)
}

/// Closed-form loading-direction stress of one load case.
///
/// The hydrostatic pressure is solved from the traction-free condition of
/// the case, so the zero-stress components are exactly zero by construction.
pub fn load_case_stress(
    params: &OgdenParameters,
    case: LoadCase,
    lambda: f64,
) -> Result<LoadCaseEvaluation> {
    params.ensure_incompressible()?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::domain(format!("stretch lambda = {lambda} must be > 0")));
    }

    let sum_mu = |f: &dyn Fn(&OgdenTerm) -> f64| params.terms.iter().map(|t| t.mu_kpa * f(t)).sum::<f64>();

    let (state, q, sigma) = match case {
        LoadCase::Uniaxial => {
            let lat = lambda.powf(-0.5);
            let state = PrincipalStretchState::new(lambda, lat, lat)?;
            // sigma2 = sigma3 = 0  =>  q = sum mu_k l^(-a_k/2)
            let q = sum_mu(&|t| lambda.powf(-t.alpha / 2.0));
            let s1 = sum_mu(&|t| lambda.powf(t.alpha) - lambda.powf(-t.alpha / 2.0));
            (state, q, [s1, 0.0, 0.0])
        }
        LoadCase::PureShear => {
            let state = PrincipalStretchState::new(lambda, 1.0, 1.0 / lambda)?;
            // sigma3 = 0  =>  q = sum mu_k l^(-a_k)
            let q = sum_mu(&|t| lambda.powf(-t.alpha));
            let s1 = sum_mu(&|t| lambda.powf(t.alpha) - lambda.powf(-t.alpha));
            // constraint stress in the held direction (lambda2 = 1)
            let s2 = sum_mu(&|_| 1.0) - q;
            (state, q, [s1, s2, 0.0])
        }
        LoadCase::Equibiaxial => {
            let state = PrincipalStretchState::new(lambda, lambda, lambda.powf(-2.0))?;
            // sigma3 = 0  =>  q = sum mu_k l^(-2 a_k)
            let q = sum_mu(&|t| lambda.powf(-2.0 * t.alpha));
            let s1 = sum_mu(&|t| lambda.powf(t.alpha) - lambda.powf(-2.0 * t.alpha));
            (state, q, [s1, s1, 0.0])
        }
    };

    Ok(LoadCaseEvaluation {
        case,
        state,
        q_kpa: q,
        sigma_kpa: sigma,
    })
}

/// Young's modulus `E = (1 + nu) * sum_k mu_k alpha_k` in kPa.
pub fn young_modulus(params: &OgdenParameters) -> f64 {
    (1.0 + params.nu) * params.terms.iter().map(|t| t.mu_kpa * t.alpha).sum::<f64>()
}

/// Stiffening ratio of a composite with rigid spherical inclusions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeCorrection {
    /// Particle volume fraction.
    pub phi: f64,
    /// `E_c / E` of the composite relative to the pure matrix.
    pub ratio: f64,
}

/// Eshelby inclusion estimate `E_c/E = 1/(1 - 5 phi / 2)`.
///
/// Valid for `0 <= phi < 0.4`; the formula is singular at `phi = 0.4`.
pub fn eshelby_ratio(phi: f64) -> Result<CompositeCorrection> {
    if !(phi.is_finite() && (0.0..0.4).contains(&phi)) {
        return Err(Error::domain(format!(
            "volume fraction {phi} outside [0, 0.4)"
        )));
    }
    Ok(CompositeCorrection {
        phi,
        ratio: 1.0 / (1.0 - 2.5 * phi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ecoflex() -> OgdenParameters {
        materials::ecoflex_gel()
    }

    #[test]
    fn rejects_zero_mu_alpha_product() {
        let err = OgdenParameters::incompressible(
            "bad",
            vec![OgdenTerm { mu_kpa: 1.0, alpha: 0.0 }],
        );
        assert!(matches!(err, Err(Error::Domain(_))));
        let err = OgdenParameters::incompressible(
            "bad",
            vec![OgdenTerm { mu_kpa: 1.0, alpha: -2.0 }],
        );
        assert!(matches!(err, Err(Error::Domain(_))));
        // Elastosil's second term has both factors negative; product is positive.
        assert!(materials::elastosil_25_1().order() == 2);
    }

    #[test]
    fn stretch_state_enforces_volume() {
        assert!(PrincipalStretchState::new(2.0, 1.0, 1.0).is_err());
        assert!(PrincipalStretchState::new(-1.0, 1.0, -1.0).is_err());
        let s = PrincipalStretchState::from_in_plane(2.0, 3.0).unwrap();
        assert!((s.stretches()[2] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn strain_energy_identity_is_zero() {
        let w = strain_energy(&ecoflex(), &PrincipalStretchState::identity()).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn strain_energy_matches_reference_value() {
        // Uniaxial stretch 2 of Ecoflex GEL; reference from a 40-digit
        // evaluation of the energy series.
        let lat = 0.5f64.sqrt();
        let state = PrincipalStretchState::new(2.0, lat, lat).unwrap();
        let w = strain_energy(&ecoflex(), &state).unwrap();
        assert!((w - 5.234524084945657).abs() < 1e-12, "W = {w}");
    }

    #[test]
    fn principal_stresses_identity_case() {
        let params = ecoflex();
        let q: f64 = params.terms().iter().map(|t| t.mu_kpa).sum();
        let sigma = principal_stresses(&params, &PrincipalStretchState::identity(), q).unwrap();
        for s in sigma {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn load_case_cross_checks_principal_stresses() {
        // UA at stretch 1.5: solving q so sigma2 = 0 must reproduce the
        // closed-form loading stress.
        let params = ecoflex();
        let lambda: f64 = 1.5;
        let lat = lambda.powf(-0.5);
        let q: f64 = params
            .terms()
            .iter()
            .map(|t| t.mu_kpa * lat.powf(t.alpha))
            .sum();
        let state = PrincipalStretchState::new(lambda, lat, lat).unwrap();
        let sigma = principal_stresses(&params, &state, q).unwrap();
        let eval = load_case_stress(&params, LoadCase::Uniaxial, lambda).unwrap();
        assert!((sigma[0] - eval.sigma_kpa[0]).abs() < 1e-12);
        assert!(sigma[1].abs() < 1e-12);
        assert!(sigma[2].abs() < 1e-12);
    }

    #[test]
    fn load_case_is_zero_at_identity() {
        let params = ecoflex();
        for case in LoadCase::ALL {
            let eval = load_case_stress(&params, case, 1.0).unwrap();
            assert_eq!(eval.sigma_kpa[0], 0.0, "{case}");
        }
    }

    #[test]
    fn load_case_rejects_nonpositive_stretch() {
        assert!(load_case_stress(&ecoflex(), LoadCase::Uniaxial, 0.0).is_err());
        assert!(load_case_stress(&ecoflex(), LoadCase::Uniaxial, -1.0).is_err());
    }

    #[test]
    fn stored_q_reproduces_all_components() {
        let params = ecoflex();
        for case in LoadCase::ALL {
            for lambda in [1.1, 1.7, 2.4] {
                let eval = load_case_stress(&params, case, lambda).unwrap();
                let sigma = principal_stresses(&params, &eval.state, eval.q_kpa).unwrap();
                for i in 0..3 {
                    assert!(
                        (sigma[i] - eval.sigma_kpa[i]).abs() < 1e-12,
                        "{case} lambda={lambda} sigma{i}"
                    );
                }
            }
        }
    }

    #[test]
    fn young_modulus_reference_values() {
        assert!((young_modulus(&ecoflex()) - 16.91133384).abs() < 1e-8);
        assert!((young_modulus(&materials::elastosil_25_1()) - 370.16804682).abs() < 1e-8);
        let single = OgdenParameters::incompressible(
            "single",
            vec![OgdenTerm { mu_kpa: 1.0, alpha: 2.0 }],
        )
        .unwrap();
        assert!((young_modulus(&single) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn eshelby_reference_values() {
        assert!((eshelby_ratio(0.0196).unwrap().ratio - 1.0515247108307045).abs() < 1e-12);
        assert_eq!(eshelby_ratio(0.0).unwrap().ratio, 1.0);
        assert!((eshelby_ratio(0.2).unwrap().ratio - 2.0).abs() < 1e-15);
        assert!(eshelby_ratio(0.4).is_err());
        assert!(eshelby_ratio(-0.1).is_err());
    }

    #[test]
    fn ua_stress_reference_grid() {
        // 40-digit reference evaluation of the UA closed form for Ecoflex GEL.
        let expected = [
            (1.0, 0.0),
            (1.5, 8.382853908490586),
            (2.0, 17.761599126750243),
            (2.5, 29.295978820004266),
            (3.0, 43.977_868_977_956_47),
        ];
        let params = ecoflex();
        for (lambda, sigma) in expected {
            let eval = load_case_stress(&params, LoadCase::Uniaxial, lambda).unwrap();
            assert!(
                (eval.sigma_kpa[0] - sigma).abs() < 1e-11,
                "lambda = {lambda}: {} vs {sigma}",
                eval.sigma_kpa[0]
            );
        }
    }

    #[test]
    fn monotone_on_characterized_range() {
        for params in [materials::ecoflex_gel(), materials::elastosil_25_1()] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=200 {
                let lambda = 1.0 + 2.0 * f64::from(i) / 200.0;
                let s = load_case_stress(&params, LoadCase::Uniaxial, lambda)
                    .unwrap()
                    .sigma_kpa[0];
                assert!(s > prev, "{}: sigma not increasing at {lambda}", params.material());
                prev = s;
            }
        }
    }

    #[test]
    fn parameter_json_round_trip() {
        let params = ecoflex();
        let back = OgdenParameters::from_json(&params.to_json()).unwrap();
        assert_eq!(params, back);
    }

    fn arb_params() -> impl Strategy<Value = OgdenParameters> {
        // Random order-1..3 sets with mu*alpha > 0, spanning both sign choices.
        proptest::collection::vec((0.05f64..50.0, 0.3f64..6.0, proptest::bool::ANY), 1..=3)
            .prop_map(|raw| {
                let terms = raw
                    .into_iter()
                    .map(|(mu, alpha, flip)| {
                        let s = if flip { -1.0 } else { 1.0 };
                        OgdenTerm { mu_kpa: s * mu, alpha: s * alpha }
                    })
                    .collect();
                OgdenParameters::incompressible("random", terms).unwrap()
            })
    }

    proptest! {
        #[test]
        fn energy_is_symmetric_in_stretches(params in arb_params(),
                                            l1 in 0.5f64..2.0, l2 in 0.5f64..2.0) {
            let a = PrincipalStretchState::from_in_plane(l1, l2).unwrap();
            let b = PrincipalStretchState::from_in_plane(l2, l1).unwrap();
            let wa = strain_energy(&params, &a).unwrap();
            let wb = strain_energy(&params, &b).unwrap();
            prop_assert!((wa - wb).abs() <= 1e-12 * (1.0 + wa.abs()));
            prop_assert!(wa >= -1e-12);
        }

        #[test]
        fn stress_shifts_linearly_in_q(params in arb_params(),
                                       l1 in 0.6f64..1.8, l2 in 0.6f64..1.8,
                                       q in -5.0f64..5.0, c in -3.0f64..3.0) {
            let state = PrincipalStretchState::from_in_plane(l1, l2).unwrap();
            let base = principal_stresses(&params, &state, q).unwrap();
            let shifted = principal_stresses(&params, &state, q + c).unwrap();
            for i in 0..3 {
                prop_assert!((shifted[i] - (base[i] - c)).abs() < 1e-9);
            }
        }

        #[test]
        fn small_strain_slopes_match_modulus(params in arb_params()) {
            // d sigma1 / d lambda at identity: E for UA, 4/3 E for PS, 2 E for EB.
            let e = young_modulus(&params);
            let h = 1e-6;
            for (case, factor) in [
                (LoadCase::Uniaxial, 1.0),
                (LoadCase::PureShear, 4.0 / 3.0),
                (LoadCase::Equibiaxial, 2.0),
            ] {
                let hi = load_case_stress(&params, case, 1.0 + h).unwrap().sigma_kpa[0];
                let lo = load_case_stress(&params, case, 1.0 - h).unwrap().sigma_kpa[0];
                let slope = (hi - lo) / (2.0 * h);
                prop_assert!(
                    (slope - factor * e).abs() <= 1e-4 * factor * e.abs(),
                    "{case}: slope {slope} vs {}", factor * e
                );
            }
        }

        #[test]
        fn stress_is_energy_derivative_along_path(params in arb_params(),
                                                  lambda in 1.05f64..2.5) {
            // Work conjugacy along the one-parameter path of each case:
            // sigma1 = lambda dW/dlambda for UA and PS; the equibiaxial path
            // stretches two directions at once, so sigma1 = (lambda/2) dW/dlambda.
            for (case, share) in [
                (LoadCase::Uniaxial, 1.0),
                (LoadCase::PureShear, 1.0),
                (LoadCase::Equibiaxial, 0.5),
            ] {
                let sigma = load_case_stress(&params, case, lambda).unwrap().sigma_kpa[0];
                let h = 1e-6 * lambda;
                let w = |l: f64| {
                    let state = load_case_stress(&params, case, l).unwrap().state;
                    strain_energy(&params, &state).unwrap()
                };
                let dw = (w(lambda + h) - w(lambda - h)) / (2.0 * h);
                let expected = share * lambda * dw;
                prop_assert!(
                    (sigma - expected).abs() <= 1e-6 * (1.0 + sigma.abs()),
                    "{case}: sigma {sigma} vs lambda dW {expected}"
                );
            }
        }
    }
}
