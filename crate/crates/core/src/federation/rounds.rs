use rayon::prelude::*;

use crate::error::{ensure_dims, Result};
use crate::linalg::{svd_square, Matrix};
use crate::losses::{coefficient_gradient, factor_gradients, LossModel};
use crate::lowrank::{aggregate_mean, augment, reconstruct, truncate, AugmentedState, LowRankFactors};
use crate::scalar::Scalar;

use super::{CommLedger, FederationConfig, VarianceMode};

/// Relative cutoff when reporting the numerical rank of a server-side average.
const NUMERICAL_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DenseRound<T> {
    pub weights: Matrix<T>,
    /// `max_{c,s} ‖W_c^s − W‖_F`.
    pub max_drift: T,
    /// `‖∇L(W)‖_F` at the round's starting point.
    pub grad_norm: T,
}

#[derive(Debug, Clone)]
pub struct LowRankRound<T> {
    pub factors: LowRankFactors<T>,
    /// `max_{c,s} ‖S̃_c^s − S̃‖_F`; the naive scheme reports the weight-space drift instead.
    pub max_drift: T,
    /// `‖∇_S̃ L(Ũ S̃ Ṽᵀ)‖_F` at the assembled coefficients (naive: `‖∇_W L‖_F`).
    pub grad_norm: T,
    pub theta: T,
    pub tail_norm: T,
    pub sigma: Vec<T>,
    pub degenerate: bool,
    /// Numerical rank of the averaged dense matrix (naive scheme only).
    pub aggregate_rank: Option<usize>,
    /// Ranks uploaded by each client (naive scheme only).
    pub client_ranks: Vec<usize>,
}

fn check_clients<T: Scalar, M: LossModel<T>>(cfg: &FederationConfig, clients: &[M], n: usize) -> Result<()> {
    cfg.validate()?;
    ensure_dims(clients.len() == cfg.clients, || {
        format!("configured for {} clients, given {}", cfg.clients, clients.len())
    })?;
    ensure_dims(clients.iter().all(|m| m.dim() == n), || {
        format!("every client model must have dimension {n}")
    })
}

/// Runs `f` for every client, possibly in parallel, returning results in client order.
fn per_client<T, M, R, F>(clients: &[M], f: F) -> Result<Vec<R>>
where
    T: Scalar,
    M: LossModel<T>,
    R: Send,
    F: Fn(usize, &M) -> Result<R> + Sync + Send,
{
    clients.par_iter().enumerate().map(|(c, m)| f(c, m)).collect()
}

fn max_of<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values.into_iter().fold(T::zero(), T::max)
}

/// FedAvg: `s*` local gradient steps from `W`, then the client mean.
pub fn fedavg_round<T: Scalar, M: LossModel<T>>(
    w: &Matrix<T>,
    cfg: &FederationConfig,
    clients: &[M],
    ledger: &mut CommLedger,
) -> Result<DenseRound<T>> {
    check_clients(cfg, clients, w.rows())?;
    let lr = T::of(cfg.lr);
    ledger.broadcast(&[w]);
    let locals = per_client(clients, |_, m| {
        let start_grad = m.weight_gradient(w);
        let mut wc = w.clone();
        let mut drift = T::zero();
        for s in 0..cfg.local_iters {
            let g = if s == 0 { start_grad.clone() } else { m.weight_gradient(&wc) };
            wc.axpy(-lr, &g);
            drift = drift.max((&wc - w).frobenius_norm());
        }
        Ok((wc, drift, start_grad))
    })?;
    ledger.aggregate(&[w], clients.len());
    Ok(DenseRound {
        weights: aggregate_mean(locals.iter().map(|l| &l.0))?,
        max_drift: max_of(locals.iter().map(|l| l.1)),
        grad_norm: aggregate_mean(locals.iter().map(|l| &l.2))?.frobenius_norm(),
    })
}

/// FedLin: local steps with the stale correction `∇L(W) − ∇L_c(W)`.
pub fn fedlin_round<T: Scalar, M: LossModel<T>>(
    w: &Matrix<T>,
    cfg: &FederationConfig,
    clients: &[M],
    ledger: &mut CommLedger,
) -> Result<DenseRound<T>> {
    check_clients(cfg, clients, w.rows())?;
    let lr = T::of(cfg.lr);
    ledger.broadcast(&[w]);
    let local_grads = per_client(clients, |_, m| Ok(m.weight_gradient(w)))?;
    ledger.aggregate(&[w], clients.len());
    let global = aggregate_mean(&local_grads)?;
    ledger.broadcast(&[&global]);

    let locals = per_client(clients, |c, m| {
        let correction = &global - &local_grads[c];
        let mut wc = w.clone();
        let mut drift = T::zero();
        for s in 0..cfg.local_iters {
            let g = if s == 0 { local_grads[c].clone() } else { m.weight_gradient(&wc) };
            wc.axpy(-lr, &(&g + &correction));
            drift = drift.max((&wc - w).frobenius_norm());
        }
        Ok((wc, drift))
    })?;
    ledger.aggregate(&[w], clients.len());
    Ok(DenseRound {
        weights: aggregate_mean(locals.iter().map(|l| &l.0))?,
        max_drift: max_of(locals.iter().map(|l| l.1)),
        grad_norm: global.frobenius_norm(),
    })
}

/// One FeDLRT round with the correction selected by `cfg.variance_mode`.
///
/// Clients share `U, S, V`, upload basis gradients, receive only the new
/// basis directions `Ū, V̄`, and train the augmented coefficients locally.
/// The averaged coefficients are truncated on the server.
pub fn fedlrt_round<T: Scalar, M: LossModel<T>>(
    factors: &LowRankFactors<T>,
    cfg: &FederationConfig,
    clients: &[M],
    ledger: &mut CommLedger,
) -> Result<LowRankRound<T>> {
    check_clients(cfg, clients, factors.dim())?;
    factors.validate()?;
    let mode = cfg.variance_mode;
    let r = factors.rank();
    let lr = T::of(cfg.lr);
    let count = clients.len();

    ledger.broadcast(&[&factors.u, &factors.s, &factors.v]);
    let grads = per_client(clients, |_, m| factor_gradients(factors, m))?;
    let g_u = aggregate_mean(grads.iter().map(|g| &g.g_u))?;
    let g_v = aggregate_mean(grads.iter().map(|g| &g.g_v))?;
    let g_s = match mode {
        VarianceMode::Simplified => Some(aggregate_mean(grads.iter().map(|g| &g.g_s))?),
        _ => None,
    };
    match &g_s {
        Some(g_s) => ledger.aggregate(&[&g_u, &g_v, g_s], count),
        None => ledger.aggregate(&[&g_u, &g_v], count),
    }

    let state = augment(factors, &g_u, &g_v)?;
    let width = state.width();
    let u_bar = state.u_aug.columns(r, width);
    let v_bar = state.v_aug.columns(r, width);
    match &g_s {
        Some(g_s) => ledger.broadcast(&[&u_bar, &v_bar, g_s]),
        None => ledger.broadcast(&[&u_bar, &v_bar]),
    }

    // Clients rebuild Ũ = [U | Ū], Ṽ = [V | V̄] and S̃ = [[S, 0], [0, 0]] locally.
    let restricted: Vec<_> = clients.iter().map(|m| m.restrict(&state.u_aug, &state.v_aug)).collect();
    let start_grads: Vec<Matrix<T>> = restricted.par_iter().map(|l| l.gradient(&state.s_aug)).collect();
    let global_grad = aggregate_mean(&start_grads)?;
    if mode == VarianceMode::Full {
        ledger.aggregate(&[&global_grad], count);
        ledger.broadcast(&[&global_grad]);
    }

    let locals: Vec<(Matrix<T>, T)> = restricted
        .par_iter()
        .enumerate()
        .map(|(c, loss)| {
            let correction = match (mode, &g_s) {
                (VarianceMode::None, _) => None,
                (VarianceMode::Full, _) => Some(&global_grad - &start_grads[c]),
                (VarianceMode::Simplified, Some(g_s)) => Some((g_s - &grads[c].g_s).embed(width)),
                (VarianceMode::Simplified, None) => unreachable!("simplified mode aggregates G_S"),
            };
            let mut sc = state.s_aug.clone();
            let mut drift = T::zero();
            for step in 0..cfg.local_iters {
                let mut g = if step == 0 { start_grads[c].clone() } else { loss.gradient(&sc) };
                if let Some(v) = &correction {
                    g.axpy(T::one(), v);
                }
                sc.axpy(-lr, &g);
                drift = drift.max((&sc - &state.s_aug).frobenius_norm());
            }
            (sc, drift)
        })
        .collect();
    ledger.aggregate(&[&state.s_aug], count);
    let s_star = aggregate_mean(locals.iter().map(|l| &l.0))?;
    let cut = truncate(&state.with_coefficients(s_star)?, &cfg.truncation)?;
    Ok(LowRankRound {
        factors: cut.factors,
        max_drift: max_of(locals.iter().map(|l| l.1)),
        grad_norm: global_grad.frobenius_norm(),
        theta: cut.theta,
        tail_norm: cut.tail_norm,
        sigma: cut.sigma,
        degenerate: cut.degenerate,
        aggregate_rank: None,
        client_ranks: Vec::new(),
    })
}

/// FeDLRT with the correction restricted to the leading `r x r` coefficient block.
pub fn fedlrt_simplified_round<T: Scalar, M: LossModel<T>>(
    factors: &LowRankFactors<T>,
    cfg: &FederationConfig,
    clients: &[M],
    ledger: &mut CommLedger,
) -> Result<LowRankRound<T>> {
    let cfg = FederationConfig {
        variance_mode: VarianceMode::Simplified,
        ..*cfg
    };
    fedlrt_round(factors, &cfg, clients, ledger)
}

/// Naive low-rank federation: every client augments, steps and truncates its
/// own factors for `s*` iterations and uploads them; the server averages the
/// dense reconstructions and truncates with a full `n x n` SVD.
pub fn naive_fedlrt_round<T: Scalar, M: LossModel<T>>(
    factors: &LowRankFactors<T>,
    cfg: &FederationConfig,
    clients: &[M],
    ledger: &mut CommLedger,
) -> Result<LowRankRound<T>> {
    check_clients(cfg, clients, factors.dim())?;
    factors.validate()?;
    let n = factors.dim();
    let lr = T::of(cfg.lr);
    let w = reconstruct(factors);

    ledger.broadcast(&[&factors.u, &factors.s, &factors.v]);
    let locals = per_client(clients, |_, m| {
        let start_grad = m.weight_gradient(&w);
        let mut fc = factors.clone();
        let mut drift = T::zero();
        for _ in 0..cfg.local_iters {
            let grads = factor_gradients(&fc, m)?;
            let state = augment(&fc, &grads.g_u, &grads.g_v)?;
            let g = coefficient_gradient(&state, m)?;
            let mut s_new = state.s_aug.clone();
            s_new.axpy(-lr, &g);
            fc = truncate(&state.with_coefficients(s_new)?, &cfg.truncation)?.factors;
            drift = drift.max((&reconstruct(&fc) - &w).frobenius_norm());
        }
        Ok((fc, drift, start_grad))
    })?;
    let client_ranks: Vec<usize> = locals.iter().map(|l| l.0.rank()).collect();
    let sizes: Vec<usize> = locals.iter().map(|l| l.0.payload_len()).collect();
    ledger.aggregate_sizes(&sizes);

    let dense: Vec<Matrix<T>> = locals.iter().map(|l| reconstruct(&l.0)).collect();
    let average = aggregate_mean(&dense)?;
    let sigma = svd_square(&average)?.sigma;
    let cutoff = sigma[0] * T::of(NUMERICAL_RANK_TOL);
    let aggregate_rank = sigma.iter().filter(|&&s| s > cutoff).count();

    let server = AugmentedState {
        u_aug: Matrix::identity(n),
        v_aug: Matrix::identity(n),
        s_aug: average,
        rank: n,
    };
    let cut = truncate(&server, &cfg.truncation)?;
    Ok(LowRankRound {
        factors: cut.factors,
        max_drift: max_of(locals.iter().map(|l| l.1)),
        grad_norm: aggregate_mean(locals.iter().map(|l| &l.2))?.frobenius_norm(),
        theta: cut.theta,
        tail_norm: cut.tail_norm,
        sigma: cut.sigma,
        degenerate: cut.degenerate,
        aggregate_rank: Some(aggregate_rank),
        client_ranks,
    })
}
