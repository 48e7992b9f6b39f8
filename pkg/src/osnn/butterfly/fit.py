"""Gradient-based fitting of butterfly meshes and the expressivity statistics."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..numerics import autograd as ag
from .network import ButterflyNetwork, PhaseConfiguration, configure_hadamard, transfer_matrix, transfer_tape


def fidelity(U, T, align_phase=True):
    """1 - min_alpha ||U - e^{i alpha} T||_F / ||T||_F."""
    U = np.asarray(U)
    T = np.asarray(T)
    nt = np.linalg.norm(T)
    if align_phase:
        # optimal alpha = arg <T, U>; computed directly to avoid cancellation
        ip = np.vdot(T, U)
        phase = ip / abs(ip) if abs(ip) > 0 else 1.0
        err = np.linalg.norm(U - phase * T)
    else:
        err = np.linalg.norm(U - T)
    return 1.0 - err / nt


class Adam:
    def __init__(self, shape, lr, b1=0.9, b2=0.999, eps=1e-12):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0

    def step(self, g, lr=None):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return (self.lr if lr is None else lr) * mh / (np.sqrt(vh) + self.eps)


def cosine_lr(lr, it, total, floor=1e-3):
    return lr * (floor + (1 - floor) * 0.5 * (1 + np.cos(np.pi * it / max(total, 1))))


@dataclass
class FitResult:
    config: object
    fidelity: float
    restart_fidelities: list = field(default_factory=list)
    best_so_far: list = field(default_factory=list)
    seeds: list = field(default_factory=list)


def _phase_aligned_loss(ur, ui, Tr, Ti):
    # ||U||^2 + ||T||^2 - 2 |tr(T^H U)| per restart, summed
    re = ag.reduce_sum(ag.add(ag.mul(ur, Tr), ag.mul(ui, Ti)), axis=(1, 2))
    im = ag.reduce_sum(ag.sub(ag.mul(ui, Tr), ag.mul(ur, Ti)), axis=(1, 2))
    mag = ag.sqrt(ag.add(ag.abs2((re, im)), 1e-300))
    nu = ag.reduce_sum(ag.abs2((ur, ui)), axis=(1, 2))
    per = ag.add(ag.sub(nu, ag.mul(mag, 2.0)), float(np.sum(Tr ** 2 + Ti ** 2)))
    return per


def fit_unitary(net, target, iterations=600, restarts=20, lr=0.1, seed=0):
    """Fit the phases of ``net`` to ``target`` up to a global phase.

    All restarts run as one batch; each has its own seed (``seed + r``)
    and the best result is tracked across restarts.
    """
    T = np.asarray(target, dtype=complex)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ShapeError(f"target must be square, got shape {T.shape}")
    if T.shape[0] != net.k:
        raise ShapeError(f"target is {T.shape[0]}x{T.shape[0]} but network is {net.k}x{net.k}")
    if restarts < 1 or iterations < 0:
        raise ShapeError("need at least one restart and a non-negative iteration count")
    seeds = [seed + r for r in range(restarts)]
    phases = np.stack([np.random.default_rng(s).uniform(0, 2 * np.pi, net.n_phases) for s in seeds])
    opt = Adam(phases.shape, lr)
    Tr, Ti = T.real[None], T.imag[None]
    best_loss = np.full(restarts, np.inf)
    best_phases = phases.copy()
    for it in range(iterations + 1):
        p = ag.Tensor.param(phases)
        ur, ui = transfer_tape(net, p)
        per = _phase_aligned_loss(ur, ui, Tr, Ti)
        better = per.value < best_loss
        best_loss[better] = per.value[better]
        best_phases[better] = phases[better]
        if it == iterations:
            break
        g = ag.backward(ag.reduce_sum(per))[p]
        phases = phases - opt.step(g, cosine_lr(lr, it, iterations))
    nt = np.linalg.norm(T)
    fids = [fidelity(transfer_matrix(net, ph), T) for ph in best_phases]
    order = np.maximum.accumulate(fids)
    i = int(np.argmax(fids))
    return FitResult(PhaseConfiguration(net, np.mod(best_phases[i], 2 * np.pi)), float(fids[i]),
                     [float(f) for f in fids], [float(f) for f in order], seeds)


def sigma_only(T, B, P):
    """Best diagonal sigma for frozen unitaries: sigma = diag(B^H T P^H)."""
    return np.diag(B.conj().T @ T @ P.conj().T)


def sigma_only_fidelity(T, B, P):
    s = sigma_only(T, B, P)
    return fidelity(B @ np.diag(s) @ P, T, align_phase=False)


def fit_bsp(T, k=None, iterations=300, lr=0.05, seed=0, restarts=1, init_jitter=0.3):
    """Fit W = B diag(sigma) P to a general complex target.

    B and P phases and complex sigma are all trained.  Restart 0 starts at the
    Hadamard configuration with the closed-form sigma (so the result is never
    worse than the frozen-Hadamard baseline); further restarts jitter it.
    """
    T = np.asarray(T, dtype=complex)
    k = T.shape[0] if k is None else k
    if T.shape != (k, k):
        raise ShapeError(f"target must be {k}x{k}")
    net = ButterflyNetwork(k)
    h = configure_hadamard(k).phases
    Hm = transfer_matrix(net, h)
    s0 = sigma_only(T, Hm, Hm)
    rng = np.random.default_rng(seed)
    R = restarts
    pb = np.repeat(h[None], R, 0)
    pp = np.repeat(h[None], R, 0)
    sr = np.repeat(s0.real[None], R, 0)
    si = np.repeat(s0.imag[None], R, 0)
    if R > 1:
        pb[1:] += rng.normal(0, init_jitter, pb[1:].shape)
        pp[1:] += rng.normal(0, init_jitter, pp[1:].shape)
    params = [pb, pp, sr, si]
    opts = [Adam(x.shape, lr) for x in params]
    Tr, Ti = T.real[None], T.imag[None]
    best_loss = np.full(R, np.inf)
    best = [x.copy() for x in params]
    for it in range(iterations + 1):
        t = [ag.Tensor.param(x) for x in params]
        B = transfer_tape(net, t[0])
        P = transfer_tape(net, t[1])
        # B diag(s) P = (B * s[None, :]) @ P
        Bs = ag.cmul(B, (ag.reshape(t[2], (R, 1, k)), ag.reshape(t[3], (R, 1, k))))
        wr, wi = ag.cmatmul(Bs, P)
        dr, di = ag.sub(wr, Tr), ag.sub(wi, Ti)
        per = ag.reduce_sum(ag.abs2((dr, di)), axis=(1, 2))
        better = per.value < best_loss
        best_loss[better] = per.value[better]
        for b, x in zip(best, params):
            b[better] = x[better]
        if it == iterations:
            break
        grads = ag.backward(ag.reduce_sum(per))
        step = cosine_lr(lr, it, iterations)
        params = [x - o.step(grads[tt], step) for x, o, tt in zip(params, opts, t)]
    i = int(np.argmin(best_loss))
    Bm = transfer_matrix(net, best[0][i])
    Pm = transfer_matrix(net, best[1][i])
    W = Bm @ np.diag(best[2][i] + 1j * best[3][i]) @ Pm
    return {"fidelity": float(fidelity(W, T, align_phase=False)), "B": Bm, "P": Pm,
            "sigma": best[2][i] + 1j * best[3][i], "W": W}


def haar_unitary(k, rng):
    z = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def multi_wavelength_matrix(B, sigma, P):
    """Effective non-negative amplitude matrix |B diag(sigma) P| of incoherent summation."""
    return np.abs(B @ np.diag(sigma) @ P)


def fit_nonnegative(T, iterations=300, lr=0.05, seed=0):
    """Fit |B diag(sigma) P| to a non-negative target (power-domain model)."""
    T = np.asarray(T, dtype=float)
    k = T.shape[0]
    net = ButterflyNetwork(k)
    rng = np.random.default_rng(seed)
    params = [configure_hadamard(k).phases + rng.normal(0, 0.3, net.n_phases),
              configure_hadamard(k).phases + rng.normal(0, 0.3, net.n_phases),
              rng.normal(0, 1, k), rng.normal(0, 1, k)]
    params = [p[None] for p in params]
    opts = [Adam(x.shape, lr) for x in params]
    best = (np.inf, None)
    for it in range(iterations + 1):
        t = [ag.Tensor.param(x) for x in params]
        B = transfer_tape(net, t[0])
        P = transfer_tape(net, t[1])
        Bs = ag.cmul(B, (ag.reshape(t[2], (1, 1, k)), ag.reshape(t[3], (1, 1, k))))
        wr, wi = ag.cmatmul(Bs, P)
        mag = ag.sqrt(ag.add(ag.abs2((wr, wi)), 1e-12))
        loss = ag.reduce_sum(ag.square(ag.sub(mag, T[None])))
        if loss.value < best[0]:
            best = (float(loss.value), [x.copy() for x in params])
        if it == iterations:
            break
        grads = ag.backward(loss)
        step = cosine_lr(lr, it, iterations)
        params = [x - o.step(grads[tt], step) for x, o, tt in zip(params, opts, t)]
    p = best[1]
    W = multi_wavelength_matrix(transfer_matrix(net, p[0][0]), p[2][0] + 1j * p[3][0],
                                transfer_matrix(net, p[1][0]))
    return {"fidelity": float(fidelity(W, T, align_phase=False)), "W": W}


MODES = ("B_only", "BSP", "multi_wavelength_nonneg")


def expressivity_report(k, n_targets, modes=MODES, seed=0, iterations=300, restarts=5):
    """Fidelity statistics over random targets for each mode.

    B_only: Haar unitaries fitted by ``fit_unitary``; BSP: Frobenius-normalized
    complex Gaussian matrices fitted by ``fit_bsp`` (with the frozen-Hadamard
    sigma-only fidelity on the same targets as reference); multi_wavelength_nonneg:
    entrywise |Gaussian| targets fitted in the non-negative model.
    """
    if n_targets < 1:
        raise ShapeError("n_targets must be >= 1")
    for m in modes:
        if m not in MODES:
            raise ShapeError(f"unknown expressivity mode {m!r}")
    rng = np.random.default_rng(seed)
    net = ButterflyNetwork(k)
    Hm = transfer_matrix(net, configure_hadamard(k))
    out = {}
    for mode in modes:
        fids, base = [], []
        for t in range(n_targets):
            if mode == "B_only":
                T = haar_unitary(k, rng)
                fids.append(fit_unitary(net, T, iterations, restarts, seed=seed + 1000 * t).fidelity)
            elif mode == "BSP":
                T = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
                T /= np.linalg.norm(T)
                fids.append(fit_bsp(T, iterations=iterations, seed=seed + t, restarts=restarts)["fidelity"])
                base.append(sigma_only_fidelity(T, Hm, Hm))
            else:
                T = np.abs(rng.standard_normal((k, k)))
                T /= np.linalg.norm(T)
                fids.append(fit_nonnegative(T, iterations, seed=seed + t)["fidelity"])
        f = np.array(fids)
        row = {"mean": float(f.mean()), "median": float(np.median(f)), "std": float(f.std()), "n": n_targets}
        if base:
            row["sigma_only_mean"] = float(np.mean(base))
        out[mode] = row
    return out
