//! Closed-form flop models for the reflection-design methods and a check of
//! the instrumented operation counter against the leading-order model.
//!
//! Only the leading-order terms are evaluated. The competing methods are
//! reported through their published complexity expressions; their algorithms
//! are out of scope.

use crate::config::OpCounter;
use crate::error::Error;
use crate::Result;

/// Reflection-design method whose optimization cost is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Closed form with alternating optimization (this crate's algorithm).
    Apris,
    /// Majorization-minimization inside alternating optimization.
    MmAo,
    /// Semidefinite relaxation with Gaussian randomization.
    Sdr,
    /// Penalty dual decomposition.
    Pdd,
    /// Closed-form expression baseline.
    Ce,
    /// Alternating direction method of multipliers.
    Admm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Apris,
        Method::MmAo,
        Method::Sdr,
        Method::Pdd,
        Method::Ce,
        Method::Admm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Apris => "A/P-RIS",
            Method::MmAo => "MM-AO",
            Method::Sdr => "SDR",
            Method::Pdd => "PDD",
            Method::Ce => "CE",
            Method::Admm => "ADMM",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "apris" | "a/p-ris" | "ap-ris" => Ok(Method::Apris),
            "mm" | "mm-ao" => Ok(Method::MmAo),
            "sdr" => Ok(Method::Sdr),
            "pdd" => Ok(Method::Pdd),
            "ce" => Ok(Method::Ce),
            "admm" => Ok(Method::Admm),
            other => Err(Error::config(format!("unknown method `{other}`"))),
        }
    }

    /// Human-readable leading-order expression.
    pub fn formula(&self) -> &'static str {
        match self {
            Method::Apris => "(M^3 + N^3) K I / 3",
            Method::MmAo => "I (I_cvx log(1/eps) N^3.5 (K M^3.5 + K^2 M^2.5))",
            Method::Sdr => "K^3.5 + (N M)^3.5 + I (N M)^3",
            Method::Pdd => "I (K^1.5 N^3 + M^3 K / 3)",
            Method::Ce => "I N (3 K^2 M + 2 K^3) + M^3 K / 3",
            Method::Admm => "I (M^2 K + M^3 + I N^3) + M^3 K / 3",
        }
    }
}

/// Parameters of one model evaluation. `iterations` plays the role of every
/// I_mu (the paper assumes a common iteration count across methods);
/// `epsilon` only enters the interior-point log term.
#[derive(Debug, Clone, Copy)]
pub struct ComplexityModel {
    pub method: Method,
    pub users: usize,
    pub antennas: usize,
    pub elements: usize,
    pub iterations: usize,
    pub epsilon: f64,
}

impl ComplexityModel {
    pub fn new(method: Method, users: usize, antennas: usize, elements: usize, iterations: usize) -> Self {
        ComplexityModel {
            method,
            users,
            antennas,
            elements,
            iterations,
            epsilon: 1e-3,
        }
    }

    /// Evaluates the leading-order flop count.
    pub fn flops(&self) -> f64 {
        let k = self.users as f64;
        let m = self.antennas as f64;
        let n = self.elements as f64;
        let i = self.iterations as f64;
        match self.method {
            Method::Apris => (m.powi(3) + n.powi(3)) * k * i / 3.0,
            Method::MmAo => {
                i * (i * (1.0 / self.epsilon).ln()
                    * n.powf(3.5)
                    * (k * m.powf(3.5) + k * k * m.powf(2.5)))
            }
            Method::Sdr => k.powf(3.5) + (n * m).powf(3.5) + i * (n * m).powi(3),
            Method::Pdd => i * (k.powf(1.5) * n.powi(3) + m.powi(3) * k / 3.0),
            Method::Ce => i * n * (3.0 * k * k * m + 2.0 * k.powi(3)) + m.powi(3) * k / 3.0,
            Method::Admm => {
                i * (m * m * k + m.powi(3) + i * n.powi(3)) + m.powi(3) * k / 3.0
            }
        }
    }
}

/// Convenience wrapper over [`ComplexityModel::flops`].
pub fn flops(method: Method, users: usize, antennas: usize, elements: usize, iterations: usize) -> f64 {
    ComplexityModel::new(method, users, antennas, elements, iterations).flops()
}

/// Comparison of an instrumented run against the model.
#[derive(Debug, Clone, Copy)]
pub struct MeasuredReport {
    pub measured: f64,
    pub model: f64,
    pub ratio: f64,
    /// True when the ratio lies in [0.5, 2].
    pub within_2x: bool,
}

/// Measured complex operations (multiply-adds plus factorization work)
/// against the model evaluation.
pub fn measured_vs_model(counter: &OpCounter, model: &ComplexityModel) -> MeasuredReport {
    let measured = counter.total_complex_ops();
    let model_count = model.flops();
    let ratio = measured / model_count;
    MeasuredReport {
        measured,
        model: model_count,
        ratio,
        within_2x: (0.5..=2.0).contains(&ratio),
    }
}

/// CSV table (method, formula, count) over all methods.
pub fn table_csv(users: usize, antennas: usize, elements: usize, iterations: usize) -> String {
    let mut out = String::from("method,formula,flops\n");
    for method in Method::ALL {
        let model = ComplexityModel::new(method, users, antennas, elements, iterations);
        out.push_str(&format!(
            "{},\"{}\",{:.6e}\n",
            method.name(),
            method.formula(),
            model.flops()
        ));
    }
    out
}
