/// max(0, x).
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Derivative of `relu` w.r.t. its pre-activation: 1 where x > 0 else 0.
/// The subgradient at exactly 0 is taken as 0.
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// x if x > 0 else alpha * (exp(x) - 1).
pub fn elu(x: f64, alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0);
    if x > 0.0 {
        x
    } else {
        alpha * (x.exp() - 1.0)
    }
}

/// Derivative of `elu`: 1 where x > 0 else alpha * exp(x).
pub fn elu_grad(x: f64, alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0);
    if x > 0.0 {
        1.0
    } else {
        alpha * x.exp()
    }
}
