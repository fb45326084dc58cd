"""Pure numpy implementations of the search kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and semantics; :mod:`percsel.kernels` picks one at import time.

Shared argument layout:

psi   : (pH, pH) symmetric sensitivity matrix
vecs  : (H, W, p) error vector of model w at step t (mean or realized)
lin   : (H, W) separable linear cost of choosing model w at step t
alpha : weight of the quadratic term

The value of a sequence ``seq`` is ``alpha * v' psi v + sum_t lin[t, seq[t]]``
where ``v`` stacks ``vecs[t, seq[t]]``.
"""
import numpy as np

CHUNK = 1 << 15


def sequence_value(psi, vecs, lin, alpha, seq):
    H = vecs.shape[0]
    seq = np.asarray(seq, dtype=np.int64)
    v = vecs[np.arange(H), seq].reshape(-1)
    return float(alpha * (v @ psi @ v) + lin[np.arange(H), seq].sum())


def _digits(start, stop, H, W):
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((idx.shape[0], H), dtype=np.int64)
    for t in range(H - 1, -1, -1):
        out[:, t] = idx % W
        idx //= W
    return out


def _chunk_values(psi, vecs, lin, alpha, digits):
    H = vecs.shape[0]
    steps = np.arange(H)
    V = vecs[steps, digits].reshape(digits.shape[0], -1)
    quad = np.einsum("ij,ij->i", V @ psi, V)
    return alpha * quad + lin[steps, digits].sum(axis=1)


def exhaustive_min(psi, vecs, lin, alpha):
    H, W = lin.shape
    total = W ** H
    best = np.inf
    for start in range(0, total, CHUNK):
        vals = _chunk_values(psi, vecs, lin, alpha, _digits(start, min(total, start + CHUNK), H, W))
        best = min(best, float(vals.min()))
    return best


def exhaustive_first_below(psi, vecs, lin, alpha, threshold):
    """Lexicographically first sequence whose value is <= threshold, or None."""
    H, W = lin.shape
    total = W ** H
    for start in range(0, total, CHUNK):
        digits = _digits(start, min(total, start + CHUNK), H, W)
        vals = _chunk_values(psi, vecs, lin, alpha, digits)
        hit = np.flatnonzero(vals <= threshold)
        if hit.size:
            return digits[hit[0]].copy()
    return None


def project_rows(Y):
    """Euclidean projection of every row of Y onto the probability simplex."""
    W = Y.shape[1]
    U = -np.sort(-Y, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ks = np.arange(1, W + 1)
    cond = U - css / ks > 0
    rho = W - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(Y.shape[0]), rho] / (rho + 1)
    return np.maximum(Y - theta[:, None], 0.0)


def relax(psi, vecs, lin, alpha, fixed, b0, lip, tol, max_iter, cutoff=np.inf):
    """Accelerated projected gradient over a product of simplices.

    Rows with ``fixed[t] >= 0`` are pinned to that vertex.  Returns
    ``(b, f, gap, bound, iters)`` where ``gap`` is the Frank-Wolfe gap at
    ``b`` and ``bound`` the best valid lower bound ``f - gap`` seen.  The loop
    also stops once ``bound >= cutoff``.
    """
    H, W, p = vecs.shape
    fixed = np.asarray(fixed, dtype=np.int64)
    free = fixed < 0
    pinned = np.zeros((H, W))
    pinned[~free, fixed[~free]] = 1.0
    step = 1.0 / lip

    def full(b):
        b = b.copy()
        b[~free] = pinned[~free]
        return b

    def evaluate(b):
        v = np.einsum("tw,twp->tp", b, vecs).reshape(-1)
        g = psi @ v
        return v, g

    def grad_of(g):
        return 2.0 * alpha * np.einsum("twp,tp->tw", vecs, g.reshape(H, p)) + lin

    def fw_gap(b, grad):
        return float(np.sum(b[free] * grad[free]) - grad[free].min(axis=1).sum())

    x = full(b0)
    x[free] = project_rows(x[free])
    vx, gx = evaluate(x)
    fx = float(alpha * vx @ gx + np.sum(lin * x))
    y, gy = x, gx
    t_k = 1.0
    best_bound = -np.inf
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad_y = grad_of(gy)
        x_new = full(y)
        x_new[free] = project_rows(y[free] - step * grad_y[free])
        v_new, g_new = evaluate(x_new)
        f_new = float(alpha * v_new @ g_new + np.sum(lin * x_new))
        grad_new = grad_of(g_new)
        gap = fw_gap(x_new, grad_new)
        best_bound = max(best_bound, f_new - gap)
        if f_new > fx:
            # function-value restart
            t_k = 1.0
            y, gy = x_new, g_new
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
            mom = (t_k - 1.0) / t_next
            y = x_new + mom * (x_new - x)
            gy = g_new + mom * (g_new - gx)
            t_k = t_next
        x, gx, fx = x_new, g_new, f_new
        if gap <= tol * max(1.0, abs(fx)) or best_bound >= cutoff:
            break
    return x, fx, gap, best_bound, it


def local_search(psi, vecs, lin, alpha, seq):
    """Best-improvement single-step moves until no move lowers the value."""
    H, W, p = vecs.shape
    seq = np.array(seq, dtype=np.int64)
    v = vecs[np.arange(H), seq].reshape(-1)
    g = psi @ v
    val = float(alpha * v @ g + lin[np.arange(H), seq].sum())
    for _ in range(1000):
        improved = False
        for t in range(H):
            blk = slice(t * p, (t + 1) * p)
            cur = seq[t]
            d = vecs[t] - vecs[t, cur]                      # (W, p)
            P = psi[blk, blk]
            delta = alpha * (2.0 * d @ g[blk] + np.einsum("wi,ij,wj->w", d, P, d)) \
                + lin[t] - lin[t, cur]
            delta[cur] = 0.0
            w = int(np.argmin(delta))
            if delta[w] < -1e-14 * (1.0 + abs(val)):
                g += psi[:, blk] @ d[w]
                val += float(delta[w])
                seq[t] = w
                improved = True
        if not improved:
            break
    return seq, val
