//! Data-only out-of-distribution monitor.
//!
//! One beta distribution is fitted per image meta-property on the training
//! images. An input is rejected when any property falls outside the two-sided
//! `[q, 1 - q]` quantile interval of its fitted distribution. The monitor only
//! ever looks at the input image, never at model outputs.

mod beta;

pub use beta::{
    beta_quantile, beta_quantile_unit, fit_beta_mom, fit_beta_mom_on_support, BetaParams, FitError,
    MIN_SAMPLES, QUANTILE_TOLERANCE,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{MetaProperties, MetaProperty};
use crate::verdict::{Stage, Verdict};

pub const MODEL_HEADER: &str = "ood-model v1";

#[derive(Debug, Error, PartialEq)]
pub enum OodError {
    #[error("quantile level {0} must lie strictly between 0 and 0.5")]
    QuantileLevel(f64),
    #[error("need at least {MIN_SAMPLES} training rows, got {0}")]
    TooFewRows(usize),
    #[error("fitting {property}: {source}")]
    Fit {
        property: MetaProperty,
        #[source]
        source: FitError,
    },
    #[error("property {0} is not finite")]
    NonFinite(MetaProperty),
    #[error("model document line {line}: {message}")]
    Format { line: usize, message: String },
}

/// How raw property values are mapped into the unit interval before fitting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    /// Padded observed range of the training values.
    #[default]
    SampleRange,
    /// The declared range of each property (`[0, 1]`, or `[0, 8]` for entropy).
    Declared,
}

impl SupportMode {
    fn name(self) -> &'static str {
        match self {
            SupportMode::SampleRange => "sample_range",
            SupportMode::Declared => "declared",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyModel {
    pub property: MetaProperty,
    pub params: BetaParams,
    /// Quantile at `q`, raw units.
    pub lower: f64,
    /// Quantile at `1 - q`, raw units.
    pub upper: f64,
}

impl PropertyModel {
    pub fn accepts(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodModel {
    pub q: f64,
    pub support: SupportMode,
    /// Canonical order: brightness, saturation, entropy, edge_amount.
    pub properties: [PropertyModel; 4],
}

fn check_q(q: f64) -> Result<(), OodError> {
    if q > 0.0 && q < 0.5 {
        Ok(())
    } else {
        Err(OodError::QuantileLevel(q))
    }
}

pub fn fit_ood(training: &[MetaProperties], q: f64) -> Result<OodModel, OodError> {
    fit_ood_with(training, q, SupportMode::SampleRange)
}

pub fn fit_ood_with(
    training: &[MetaProperties],
    q: f64,
    support: SupportMode,
) -> Result<OodModel, OodError> {
    check_q(q)?;
    if training.len() < MIN_SAMPLES {
        return Err(OodError::TooFewRows(training.len()));
    }
    let mut fitted = Vec::with_capacity(4);
    for property in MetaProperty::ALL {
        let column: Vec<f64> = training.iter().map(|m| m.get(property)).collect();
        let params = match support {
            SupportMode::SampleRange => fit_beta_mom(&column),
            SupportMode::Declared => {
                let (lo, hi) = property.range();
                fit_beta_mom_on_support(&column, lo, hi)
            }
        }
        .map_err(|source| OodError::Fit { property, source })?;
        fitted.push(PropertyModel {
            property,
            params,
            lower: beta_quantile(&params, q),
            upper: beta_quantile(&params, 1.0 - q),
        });
    }
    Ok(OodModel {
        q,
        support,
        properties: fitted.try_into().expect("four properties"),
    })
}

/// Rejects iff some property lies outside its closed acceptance interval.
pub fn check_ood(model: &OodModel, props: &MetaProperties) -> Result<Verdict, OodError> {
    let mut reasons = Vec::new();
    for pm in &model.properties {
        let v = props.get(pm.property);
        if !v.is_finite() {
            return Err(OodError::NonFinite(pm.property));
        }
        if !pm.accepts(v) {
            reasons.push(pm.property.name().to_string());
        }
    }
    Ok(Verdict::from_reasons(Stage::Ood, reasons))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl OodModel {
    pub fn property(&self, p: MetaProperty) -> &PropertyModel {
        &self.properties[p.index()]
    }

    /// Versioned plain-text form; floats carry 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MODEL_HEADER}\nq {}\nsupport {}\n",
            fmt_f64(self.q),
            self.support.name()
        );
        for pm in &self.properties {
            let p = &pm.params;
            out.push_str(&format!(
                "{} alpha={} beta={} scale_lo={} scale_hi={} lower={} upper={}\n",
                pm.property,
                fmt_f64(p.alpha),
                fmt_f64(p.beta),
                fmt_f64(p.scale_lo),
                fmt_f64(p.scale_hi),
                fmt_f64(pm.lower),
                fmt_f64(pm.upper)
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, OodError> {
        let err = |line: usize, message: String| OodError::Format { line, message };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        match lines.next() {
            Some((_, MODEL_HEADER)) => {}
            Some((n, other)) => {
                return Err(err(n, format!("expected `{MODEL_HEADER}`, got `{other}`")))
            }
            None => return Err(err(0, "empty document".into())),
        }
        let mut q = None;
        let mut support = SupportMode::SampleRange;
        let mut props: [Option<PropertyModel>; 4] = [None; 4];

        for (n, line) in lines {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            match key {
                "q" => {
                    let v = parts.next().and_then(|s| s.parse::<f64>().ok());
                    q = Some(v.ok_or_else(|| err(n, "bad q".into()))?);
                }
                "support" => {
                    support = match parts.next() {
                        Some("sample_range") => SupportMode::SampleRange,
                        Some("declared") => SupportMode::Declared,
                        other => return Err(err(n, format!("unknown support {other:?}"))),
                    }
                }
                name => {
                    let property = MetaProperty::from_name(name)
                        .ok_or_else(|| err(n, format!("unknown property `{name}`")))?;
                    let mut fields = [f64::NAN; 6];
                    const KEYS: [&str; 6] =
                        ["alpha", "beta", "scale_lo", "scale_hi", "lower", "upper"];
                    for kv in parts {
                        let (k, v) = kv
                            .split_once('=')
                            .ok_or_else(|| err(n, format!("expected key=value, got `{kv}`")))?;
                        let slot = KEYS
                            .iter()
                            .position(|&x| x == k)
                            .ok_or_else(|| err(n, format!("unknown field `{k}`")))?;
                        fields[slot] = v
                            .parse()
                            .map_err(|_| err(n, format!("bad number `{v}` for {k}")))?;
                    }
                    if let Some(i) = fields.iter().position(|v| !v.is_finite()) {
                        return Err(err(n, format!("missing or non-finite `{}`", KEYS[i])));
                    }
                    let [alpha, beta, scale_lo, scale_hi, lower, upper] = fields;
                    if alpha <= 0.0 || beta <= 0.0 || scale_lo >= scale_hi || lower >= upper {
                        return Err(err(n, format!("invalid parameters for {property}")));
                    }
                    props[property.index()] = Some(PropertyModel {
                        property,
                        params: BetaParams {
                            alpha,
                            beta,
                            scale_lo,
                            scale_hi,
                        },
                        lower,
                        upper,
                    });
                }
            }
        }
        let q = q.ok_or_else(|| err(0, "missing q".into()))?;
        check_q(q)?;
        let mut out = Vec::with_capacity(4);
        for (i, p) in props.into_iter().enumerate() {
            out.push(
                p.ok_or_else(|| err(0, format!("missing property {}", MetaProperty::ALL[i])))?,
            );
        }
        Ok(OodModel {
            q,
            support,
            properties: out.try_into().expect("four properties"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdict::Decision;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Beta, Distribution};

    fn training(n: usize, seed: u64) -> Vec<MetaProperties> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = [
            Beta::new(4.0, 4.0).unwrap(),
            Beta::new(2.0, 6.0).unwrap(),
            Beta::new(9.0, 3.0).unwrap(),
            Beta::new(2.0, 30.0).unwrap(),
        ];
        (0..n)
            .map(|_| {
                MetaProperties::from_array([
                    d[0].sample(&mut rng),
                    d[1].sample(&mut rng),
                    8.0 * d[2].sample(&mut rng),
                    d[3].sample(&mut rng),
                ])
            })
            .collect()
    }

    fn mid(model: &OodModel) -> MetaProperties {
        MetaProperties::from_array(model.properties.map(|p| 0.5 * (p.lower + p.upper)))
    }

    #[test]
    fn intervals_are_ordered() {
        let model = fit_ood(&training(500, 1), 0.01).unwrap();
        for p in &model.properties {
            assert!(p.lower < p.upper);
        }
    }

    #[test]
    fn constant_column_names_property() {
        let mut rows = training(50, 2);
        for r in &mut rows {
            r.edge_amount = 0.0;
        }
        let err = fit_ood(&rows, 0.01).unwrap_err();
        assert!(matches!(
            err,
            OodError::Fit {
                property: MetaProperty::EdgeAmount,
                ..
            }
        ));
        assert!(err.to_string().contains("edge_amount"));
    }

    #[test]
    fn q_must_be_in_open_half_interval() {
        let rows = training(50, 3);
        assert_eq!(
            fit_ood(&rows, 0.0).unwrap_err(),
            OodError::QuantileLevel(0.0)
        );
        assert_eq!(
            fit_ood(&rows, 0.5).unwrap_err(),
            OodError::QuantileLevel(0.5)
        );
    }

    #[test]
    fn check_examples() {
        let model = fit_ood(&training(500, 4), 0.01).unwrap();
        let m = mid(&model);
        assert_eq!(check_ood(&model, &m).unwrap().decision, Decision::Accept);

        let mut bright = m;
        bright.brightness = model.property(MetaProperty::Brightness).upper + 1e-3;
        let v = check_ood(&model, &bright).unwrap();
        assert_eq!(v.decision, Decision::Reject);
        assert_eq!(v.reasons, vec!["brightness"]);

        let mut edge = m;
        edge.saturation = model.property(MetaProperty::Saturation).lower;
        assert_eq!(check_ood(&model, &edge).unwrap().decision, Decision::Accept);

        let mut bad = m;
        bad.entropy = f64::NAN;
        assert_eq!(
            check_ood(&model, &bad).unwrap_err(),
            OodError::NonFinite(MetaProperty::Entropy)
        );
    }

    #[test]
    fn smaller_q_gives_nested_intervals() {
        let rows = training(400, 5);
        let wide = fit_ood(&rows, 0.005).unwrap();
        let narrow = fit_ood(&rows, 0.05).unwrap();
        for (w, n) in wide.properties.iter().zip(&narrow.properties) {
            assert!(w.lower <= n.lower && n.upper <= w.upper);
        }
    }

    #[test]
    fn text_roundtrip_is_bit_exact() {
        for support in [SupportMode::SampleRange, SupportMode::Declared] {
            let model = fit_ood_with(&training(300, 6), 0.01, support).unwrap();
            let back = OodModel::from_text(&model.to_text()).unwrap();
            assert_eq!(back, model);
            for (a, b) in back.properties.iter().zip(&model.properties) {
                assert_eq!(a.params.alpha.to_bits(), b.params.alpha.to_bits());
                assert_eq!(a.upper.to_bits(), b.upper.to_bits());
            }
        }
    }

    #[test]
    fn malformed_documents() {
        assert!(OodModel::from_text("").is_err());
        assert!(OodModel::from_text("ood-model v2\n").is_err());
        let text = fit_ood(&training(100, 7), 0.01).unwrap().to_text();
        let broken = text.replace("alpha=", "alfa=");
        assert!(matches!(
            OodModel::from_text(&broken),
            Err(OodError::Format { .. })
        ));
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(OodModel::from_text(&truncated).is_err());
    }
}
