"""Central finite-difference gradient checks for the autodiff ops."""
import numpy as np

from dqtrader import autodiff as ad

FD_EPS = 1e-5
REL_TOL = 1e-4
# entries whose gradient magnitude is below this floor are compared absolutely
FLOOR = 1e-6


def rel_error(analytic, numeric):
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)))


def check(build, inputs, rng, n_diff=None):
    """``build(tensors, tape) -> Tensor``; projects the output onto a fixed random
    direction and compares tape gradients with central differences. Only the
    first ``n_diff`` inputs are differentiated; the rest are constants."""
    n_diff = len(inputs) if n_diff is None else n_diff
    tensors = [ad.Tensor(x, requires_grad=True) for x in inputs]
    tape = ad.Tape()
    out = build(tensors, tape)
    proj = rng.standard_normal(out.shape)
    tape.backward(out, proj)
    worst = 0.0
    for k, t in enumerate(tensors[:n_diff]):
        numeric = np.zeros_like(t.data)
        for idx in np.ndindex(t.shape):
            vals = []
            for sign in (1.0, -1.0):
                probe = [x.copy() for x in inputs]
                probe[k][idx] += sign * FD_EPS
                o = build([ad.Tensor(x) for x in probe], None)
                vals.append(float(np.sum(o.data * proj)))
            numeric[idx] = (vals[0] - vals[1]) / (2 * FD_EPS)
        worst = max(worst, rel_error(t.grad, numeric))
    return worst


def _away_from(x, points, margin, rng):
    """Nudge samples that fall within ``margin`` of a kink."""
    x = np.array(x)
    for p in points:
        close = np.abs(x - p) < margin
        x[close] = p + np.where(rng.random(close.sum()) < 0.5, -1, 1) * (margin + rng.random(close.sum()))
    return x


def op_cases():
    """``name -> (sampler(rng) -> inputs, build[, n_diff])`` for every differentiable op."""
    def affine_in(rng):
        B, I, O = rng.integers(1, 5, 3)
        return [rng.standard_normal((B, I)), rng.standard_normal((I, O)), rng.standard_normal(O)]

    def noisy_in(rng):
        shape = tuple(rng.integers(1, 4, 2))
        return [rng.standard_normal(shape), rng.random(shape), rng.standard_normal(shape)]

    def bn_in(rng):
        B, F = rng.integers(2, 6), rng.integers(1, 4)
        return [rng.standard_normal((B, F)) * 2, 1 + rng.random(F), rng.standard_normal(F)]

    def bn_build(train):
        def build(t, tape):
            F = t[0].shape[1]
            stats = ad.BatchNormStats(np.full(F, 0.3), np.full(F, 1.7))
            return ad.batch_norm(t[0], t[1], t[2], stats, train, tape)
        return build

    def duel_in(rng):
        B = rng.integers(1, 5)
        return [rng.standard_normal((B, 1)), rng.standard_normal((B, 3))]

    def gather_in(rng):
        return [rng.standard_normal((4, 3))]

    def loss_in(rng):
        B = rng.integers(1, 6)
        target = rng.standard_normal(B) * 2
        delta = _away_from(rng.standard_normal(B) * 2, (-1.0, 1.0), 1e-3, rng)
        return [target + delta, target, rng.random(B) + 0.1]

    def loss_build(reduction):
        def build(t, tape):
            # only the prediction is differentiable; target and weights are constants
            return ad.smooth_l1(t[0], t[1].data, t[2].data, reduction, tape)
        return build

    cases = {
        "affine": (affine_in, lambda t, tape: ad.affine(t[0], t[1], t[2], tape)),
        "relu": (lambda rng: [_away_from(rng.standard_normal((3, 4)), (0.0,), 1e-3, rng)],
                 lambda t, tape: ad.relu(t[0], tape)),
        "batch_norm_train": (bn_in, bn_build(True)),
        "batch_norm_eval": (bn_in, bn_build(False)),
        "dueling": (duel_in, lambda t, tape: ad.dueling(t[0], t[1], tape)),
        "gather": (gather_in, lambda t, tape: ad.gather(t[0], [2, 0, 1, 1], tape)),
        "smooth_l1_mean": (loss_in, loss_build("mean")),
        "smooth_l1_sum": (loss_in, loss_build("sum")),
        "l2_penalty": (lambda rng: [rng.standard_normal((2, 3)), rng.standard_normal(4)],
                       lambda t, tape: ad.l2_penalty(t, 0.37, tape)),
    }

    # eps is a constant drawn once per instance
    cases["noisy_weight"] = (noisy_in, lambda t, tape: ad.noisy_weight(t[0], t[1], t[2].data, tape), 2)
    cases["smooth_l1_mean"] += (1,)
    cases["smooth_l1_sum"] += (1,)
    return cases


def run_all(instances=100, seed=0):
    """Worst relative error per op over ``instances`` random draws."""
    rng = np.random.default_rng(seed)
    worst = {}
    for name, (sample, build, *n_diff) in op_cases().items():
        worst[name] = max(check(build, sample(rng), rng, *n_diff) for _ in range(instances))
    return worst
