use crate::scenario::SPEED_OF_LIGHT;

const ARMIJO_C1: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const INITIAL_STEP_M: f64 = 0.1;
const MAX_HALVINGS: usize = 40;
const MIN_NORM: f64 = 1e-9;

fn norm(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Modelled TDoA in seconds: `(‖p_l‖ + ‖p − p_l‖ − ‖p‖)/c`.
pub fn model_tdoa(ut: [f64; 2], scatterer: [f64; 2]) -> f64 {
    (norm(scatterer) + norm(sub(ut, scatterer)) - norm(ut)) / SPEED_OF_LIGHT
}

/// `Σ_l |τ̂_l − τ̄_l(p, p_l)|²` in s².
pub fn tdoa_loss(ut: [f64; 2], scatterers: &[[f64; 2]], measured: &[f64]) -> f64 {
    scatterers
        .iter()
        .zip(measured)
        .map(|(&s, &t)| (t - model_tdoa(ut, s)).powi(2))
        .sum()
}

/// Analytic gradient of [`tdoa_loss`] with respect to the UT and each scatterer.
/// `None` where a norm vanishes.
pub fn tdoa_gradient(ut: [f64; 2], scatterers: &[[f64; 2]], measured: &[f64]) -> Option<([f64; 2], Vec<[f64; 2]>)> {
    let c = SPEED_OF_LIGHT;
    let nu = norm(ut);
    if nu < MIN_NORM {
        return None;
    }
    let mut g_ut = [0.0; 2];
    let mut g_sc = Vec::with_capacity(scatterers.len());
    for (&s, &t) in scatterers.iter().zip(measured) {
        let d = sub(ut, s);
        let (nd, ns) = (norm(d), norm(s));
        if nd < MIN_NORM || ns < MIN_NORM {
            return None;
        }
        let e = -2.0 * (t - model_tdoa(ut, s)) / c;
        for i in 0..2 {
            g_ut[i] += e * (d[i] / nd - ut[i] / nu);
        }
        g_sc.push([e * (s[0] / ns - d[0] / nd), e * (s[1] / ns - d[1] / nd)]);
    }
    Some((g_ut, g_sc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub ut: [f64; 2],
    pub scatterers: Vec<[f64; 2]>,
    /// Loss before the first iteration and after each one.
    pub loss_trace: Vec<f64>,
    /// Coordinate updates skipped at non-differentiable points.
    pub skipped: usize,
}

/// Coordinate-wise gradient descent with Armijo backtracking: UT `x`, UT `y`,
/// then (if `move_scatterers`) each scatterer's `x`, `y`, repeated `iterations` times.
pub fn refine_gradient(
    ut: [f64; 2],
    scatterers: &[[f64; 2]],
    measured: &[f64],
    iterations: usize,
    move_scatterers: bool,
) -> Refinement {
    let mut state: Vec<[f64; 2]> = std::iter::once(ut).chain(scatterers.iter().copied()).collect();
    let loss_of = |st: &[[f64; 2]]| tdoa_loss(st[0], &st[1..], measured);
    let mut loss = loss_of(&state);
    let mut trace = vec![loss];
    let mut skipped = 0;
    for _ in 0..iterations {
        let bodies = if move_scatterers { state.len() } else { 1 };
        for body in 0..bodies {
            for axis in 0..2 {
                let Some((g_ut, g_sc)) = tdoa_gradient(state[0], &state[1..], measured) else {
                    skipped += 1;
                    continue;
                };
                let g = if body == 0 { g_ut[axis] } else { g_sc[body - 1][axis] };
                if g == 0.0 || !g.is_finite() {
                    continue;
                }
                let mut step = INITIAL_STEP_M / g.abs();
                for _ in 0..MAX_HALVINGS {
                    let mut trial = state.clone();
                    trial[body][axis] -= step * g;
                    let candidate = loss_of(&trial);
                    if candidate <= loss - ARMIJO_C1 * step * g * g {
                        state = trial;
                        loss = candidate;
                        break;
                    }
                    step *= SHRINK;
                }
            }
        }
        trace.push(loss);
    }
    Refinement {
        ut: state[0],
        scatterers: state[1..].to_vec(),
        loss_trace: trace,
        skipped,
    }
}
