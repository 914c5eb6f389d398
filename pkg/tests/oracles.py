"""Independent reference implementations used as test oracles.

Everything here is deliberately decoupled from the package internals: the
Bessel oracle sums the ascending power series in arbitrary precision with
mpmath, finite differences are plain central differences, and the
brute-force helpers enumerate instead of using any package shortcut.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np


def log_bessel_series_mp(v: float, z: float, dps: int = 50) -> float:
    """ln I_v(z) by direct arbitrary-precision summation of
    sum_k (z/2)^(2k+v) / (k! Gamma(k+v+1))."""
    if z == 0:
        return 0.0 if v == 0 else -mp.inf
    with mp.workdps(dps):
        v_mp = mp.mpf(v)
        half = mp.mpf(z) / 2
        term = half**v_mp / mp.gamma(v_mp + 1)
        total = term
        q = half * half
        k = 0
        while True:
            k += 1
            term = term * q / (k * (k + v_mp))
            total += term
            if term < total * mp.mpf(10) ** (-dps - 5) and k > half:
                break
        return float(mp.log(total))


def log_cm_mp(m: int, kappa: float, dps: int = 50) -> float:
    """ln C_m(kappa) through the series oracle."""
    v = m / 2.0 - 1.0
    if kappa == 0.0:
        with mp.workdps(dps):
            return float(mp.log(mp.gamma(mp.mpf(m) / 2) / (2 * mp.pi ** (mp.mpf(m) / 2))))
    with mp.workdps(dps):
        lead = v * mp.log(mp.mpf(kappa)) - (mp.mpf(m) / 2) * mp.log(2 * mp.pi)
        return float(lead - log_bessel_series_mp(v, kappa, dps=dps))


def bessel_ratio_mp(v: float, z: float, dps: int = 50) -> float:
    """I_v(z)/I_{v-1}(z) in arbitrary precision."""
    if z == 0:
        return 0.0
    with mp.workdps(dps):
        return float(mp.besseli(mp.mpf(v), mp.mpf(z)) / mp.besseli(mp.mpf(v) - 1, mp.mpf(z)))


def grad_log_cm_fd_mp(m: int, kappa: float, h: float, dps: int = 50) -> float:
    """Central difference of ln C_m entirely in arbitrary precision.

    Rounding the two endpoint values to float64 first would leave ~1e-13
    absolute noise, far above the quotient when the slope is ~1e-5.
    """
    with mp.workdps(dps):
        v = mp.mpf(m) / 2 - 1

        def log_cm(k):
            return v * mp.log(k) - (mp.mpf(m) / 2) * mp.log(2 * mp.pi) - mp.log(mp.besseli(v, k))

        k = mp.mpf(kappa)
        step = mp.mpf(h)
        return float((log_cm(k + step) - log_cm(k - step)) / (2 * step))


def fd_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x.flat[i]))
        xp = x.copy()
        xp.flat[i] += step
        xm = x.copy()
        xm.flat[i] -= step
        g.flat[i] = (f(xp) - f(xm)) / (2 * step)
    return g


def grad_close(analytic: np.ndarray, numeric: np.ndarray, rtol: float,
               floor: float = 1e-6, atol: float = 1e-8) -> bool:
    """Coordinate-wise gradient agreement.

    Coordinates above the floor must agree to rtol relative error;
    coordinates where both sides are below the floor are compared with an
    absolute tolerance (central differences cannot certify relative error
    on a vanishing gradient).
    """
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    for a, n in zip(analytic, numeric):
        big = max(abs(a), abs(n))
        if big > floor:
            if abs(a - n) / big > rtol:
                return False
        elif abs(a - n) > atol:
            return False
    return True


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def brute_force_knn(e_hat: np.ndarray, vectors: np.ndarray, k: int):
    """(id, score) list sorted by (-score, id), the spec's tie order."""
    scores = [(float(vectors[i] @ e_hat), i) for i in range(vectors.shape[0])]
    scores.sort(key=lambda t: (-t[0], t[1]))
    return [(i, s) for s, i in scores[:k]]


def beam_width1(model, src_ids, table, forbidden=(0, 3), max_steps=None):
    """Reference width-1 beam search over the model's public step API."""
    import numpy as _np

    from vmfseq import tape
    from vmfseq.embed import EOS_ID

    src = _np.asarray(list(src_ids), dtype=_np.intp)[None, :]
    mask = _np.ones_like(src, dtype=float)
    words = []
    with tape.no_grad():
        keys, state = model.encode(src, mask)
        beam = [(0.0, 0, state)]  # (score, prev id, state); width 1
        for _ in range(max_steps or model.cfg.max_sentence_length):
            score, prev, state = beam[0]
            step, new_state = model.decode_step(_np.array([prev], dtype=_np.intp), state, keys, mask)
            if model.cfg.head == "softmax":
                cand = step.head_out.data[0].copy()
            else:
                cand = table.vectors @ step.head_out.data[0]
            cand[list(forbidden)] = -_np.inf
            best = int(_np.argmax(cand))
            beam = [(score + float(cand[best]), best, new_state)]
            words.append(table.words[best])
            if best == EOS_ID:
                break
    return words
