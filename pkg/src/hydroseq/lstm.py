"""Single-layer LSTM kernel with a linear head: forward, exact BPTT gradients,
Adam, and finite-difference gradient verification.

Everything is float64 numpy with no autodiff. The four gates are stacked in
the fixed row order i (input), f (forget), g (candidate), o (output), so a
parameter array of shape (4H, ...) slices as [0:H]=i, [H:2H]=f, [2H:3H]=g,
[3H:4H]=o. Serialized weights rely on this layout.

The sequence-to-value forward pass zero-initializes (h, c), consumes an
(L, F) window, and emits w_out . h_L + b_out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; never exponentiates a positive argument.

    Preserves the input float dtype (the gradient checker runs in longdouble).
    """
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmParams:
    """All weights of the cell plus the scalar linear head.

    Shapes: Wx (4H, F), Wh (4H, H), b (4H,), w_out (H,), b_out scalar.
    """

    Wx: np.ndarray
    Wh: np.ndarray
    b: np.ndarray
    w_out: np.ndarray
    b_out: float

    def __post_init__(self):
        self.Wx = np.asarray(self.Wx, dtype=np.float64)
        self.Wh = np.asarray(self.Wh, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        self.b_out = float(self.b_out)
        H, F = self.H, self.F
        if self.Wx.shape != (4 * H, F) or self.Wh.shape != (4 * H, H) or self.b.shape != (4 * H,) \
                or self.w_out.shape != (H,):
            raise ValueError(f"inconsistent parameter shapes for H={H}, F={F}")
        for name, a in (("Wx", self.Wx), ("Wh", self.Wh), ("b", self.b), ("w_out", self.w_out)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite entries in {name}")
        if not np.isfinite(self.b_out):
            raise ValueError("non-finite b_out")

    @property
    def H(self) -> int:
        return self.Wh.shape[1]

    @property
    def F(self) -> int:
        return self.Wx.shape[1]

    def copy(self) -> "LstmParams":
        return LstmParams(self.Wx.copy(), self.Wh.copy(), self.b.copy(),
                          self.w_out.copy(), self.b_out)

    def flatten(self) -> np.ndarray:
        """Row-major concatenation: Wx, Wh, b, w_out, b_out."""
        return np.concatenate([self.Wx.ravel(), self.Wh.ravel(), self.b,
                               self.w_out, [self.b_out]])

    @staticmethod
    def from_flat(flat: np.ndarray, H: int, F: int) -> "LstmParams":
        flat = np.asarray(flat, dtype=np.float64)
        n = 4 * H * F + 4 * H * H + 4 * H + H + 1
        if flat.shape != (n,):
            raise ValueError(f"expected {n} values for H={H}, F={F}, got {flat.shape}")
        i = 0
        Wx = flat[i:i + 4 * H * F].reshape(4 * H, F); i += 4 * H * F
        Wh = flat[i:i + 4 * H * H].reshape(4 * H, H); i += 4 * H * H
        b = flat[i:i + 4 * H]; i += 4 * H
        w_out = flat[i:i + H]; i += H
        return LstmParams(Wx.copy(), Wh.copy(), b.copy(), w_out.copy(), float(flat[i]))


@dataclass
class LstmState:
    """Hidden and cell vectors, zero at sequence start."""

    h: np.ndarray
    c: np.ndarray

    @staticmethod
    def zeros(H: int) -> "LstmState":
        return LstmState(np.zeros(H), np.zeros(H))


@dataclass
class Gradients:
    """Loss gradients shaped like LstmParams."""

    Wx: np.ndarray
    Wh: np.ndarray
    b: np.ndarray
    w_out: np.ndarray
    b_out: float

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.Wx.ravel(), self.Wh.ravel(), self.b,
                               self.w_out, [self.b_out]])

    def scaled(self, s: float) -> "Gradients":
        return Gradients(self.Wx * s, self.Wh * s, self.b * s, self.w_out * s, self.b_out * s)


@dataclass
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainConfig:
    """Knobs of the training loop; none of them are baked into the kernel."""

    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 50
    patience: int = 5
    grad_clip_norm: float = 1.0
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate, "batch_size": self.batch_size,
            "max_epochs": self.max_epochs, "patience": self.patience,
            "grad_clip_norm": self.grad_clip_norm, "seed": self.seed,
            "adam": {"beta1": self.adam.beta1, "beta2": self.adam.beta2, "eps": self.adam.eps},
        }

    @staticmethod
    def from_json(obj: dict) -> "TrainConfig":
        adam = obj.get("adam", {})
        return TrainConfig(
            learning_rate=float(obj.get("learning_rate", 1e-3)),
            batch_size=int(obj.get("batch_size", 256)),
            max_epochs=int(obj.get("max_epochs", 50)),
            patience=int(obj.get("patience", 5)),
            grad_clip_norm=float(obj.get("grad_clip_norm", 1.0)),
            seed=int(obj.get("seed", 0)),
            adam=AdamConfig(beta1=float(adam.get("beta1", 0.9)),
                            beta2=float(adam.get("beta2", 0.999)),
                            eps=float(adam.get("eps", 1e-8))),
        )


@dataclass
class OptimState:
    """Adam first/second-moment accumulators plus the step counter."""

    m: Gradients
    v: Gradients
    t: int = 0

    @staticmethod
    def zeros_like(params: LstmParams) -> "OptimState":
        def z():
            return Gradients(np.zeros_like(params.Wx), np.zeros_like(params.Wh),
                             np.zeros_like(params.b), np.zeros_like(params.w_out), 0.0)
        return OptimState(m=z(), v=z(), t=0)


def init_params(H: int, F: int, seed: int) -> LstmParams:
    """Seeded uniform(-1/sqrt(H), 1/sqrt(H)) weights; forget-gate bias 1, rest 0.

    Draw order is Wx, Wh, w_out from one PCG64 stream, so a fixed (H, F, seed)
    always yields bit-identical parameters.
    """
    if H < 1 or F < 1:
        raise ValueError(f"H and F must be >= 1, got H={H}, F={F}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(H)
    Wx = rng.uniform(-bound, bound, size=(4 * H, F))
    Wh = rng.uniform(-bound, bound, size=(4 * H, H))
    w_out = rng.uniform(-bound, bound, size=H)
    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0  # forget gate starts open
    return LstmParams(Wx=Wx, Wh=Wh, b=b, w_out=w_out, b_out=0.0)


# ---------------------------------------------------------------------------
# Forward


@dataclass
class Trace:
    """Per-step activations retained for BPTT. Gate arrays are (L, B, H)."""

    X: np.ndarray      # (B, L, F)
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray
    preds: np.ndarray  # (B,)
    h0: np.ndarray     # (B, H) initial state (zeros unless seeded)
    c0: np.ndarray

    @property
    def final_state(self) -> tuple[np.ndarray, np.ndarray]:
        return self.h[-1], self.c[-1]


def forward_batch(params: LstmParams, X: np.ndarray,
                  state0: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[np.ndarray, Trace]:
    """Run the cell over a (B, L, F) batch and apply the head to the last step.

    The state starts at zero unless ``state0 = (h0, c0)`` seeds it (that is how
    an encoder hands off to a decoder). Returns per-sample predictions (B,)
    and the full activation trace.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != params.F:
        raise ValueError(f"expected inputs (B, L, {params.F}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite inputs")
    B, L, _ = X.shape
    H = params.H
    if state0 is None:
        h = np.zeros((B, H))
        c = np.zeros((B, H))
    else:
        h, c = state0
        if h.shape != (B, H) or c.shape != (B, H):
            raise ValueError(f"state0 must be two ({B}, {H}) arrays")
    h0, c0 = h, c
    xw = X @ params.Wx.T + params.b  # (B, L, 4H)
    i_t = np.empty((L, B, H)); f_t = np.empty((L, B, H))
    g_t = np.empty((L, B, H)); o_t = np.empty((L, B, H))
    c_t = np.empty((L, B, H)); tc_t = np.empty((L, B, H)); h_t = np.empty((L, B, H))
    for t in range(L):
        pre = xw[:, t, :] + h @ params.Wh.T
        i = sigmoid(pre[:, 0:H])
        f = sigmoid(pre[:, H:2 * H])
        g = np.tanh(pre[:, 2 * H:3 * H])
        o = sigmoid(pre[:, 3 * H:4 * H])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        i_t[t], f_t[t], g_t[t], o_t[t], c_t[t], tc_t[t], h_t[t] = i, f, g, o, c, tc, h
    preds = h @ params.w_out + params.b_out
    return preds, Trace(X=X, i=i_t, f=f_t, g=g_t, o=o_t, c=c_t, tanh_c=tc_t, h=h_t,
                        preds=preds, h0=h0, c0=c0)


def predict_batch(params: LstmParams, X: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Forward pass without retaining activations; memory stays O(chunk * H)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != params.F:
        raise ValueError(f"expected inputs (B, L, {params.F}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite inputs")
    H = params.H
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        Xc = X[s:s + chunk]
        B, L, _ = Xc.shape
        xw = Xc @ params.Wx.T + params.b
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        for t in range(L):
            pre = xw[:, t, :] + h @ params.Wh.T
            i = sigmoid(pre[:, 0:H])
            f = sigmoid(pre[:, H:2 * H])
            g = np.tanh(pre[:, 2 * H:3 * H])
            o = sigmoid(pre[:, 3 * H:4 * H])
            c = f * c + i * g
            h = o * np.tanh(c)
        out[s:s + chunk] = h @ params.w_out + params.b_out
    return out


def cell_step(params: LstmParams, x_t: np.ndarray, state: LstmState) -> LstmState:
    """One gate update; the input state is left untouched."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (params.F,):
        raise ValueError(f"expected input of shape ({params.F},), got {x_t.shape}")
    if not (np.all(np.isfinite(x_t)) and np.all(np.isfinite(state.h)) and np.all(np.isfinite(state.c))):
        raise ValueError("non-finite inputs")
    H = params.H
    pre = params.Wx @ x_t + params.Wh @ state.h + params.b
    i = sigmoid(pre[0:H])
    f = sigmoid(pre[H:2 * H])
    g = np.tanh(pre[2 * H:3 * H])
    o = sigmoid(pre[3 * H:4 * H])
    c = f * state.c + i * g
    return LstmState(h=o * np.tanh(c), c=c)


def forward_seq(params: LstmParams, inputs: np.ndarray) -> tuple[float, Trace]:
    """Sequence-to-value pass over one (L, F) window."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise ValueError(f"expected (L, F) inputs, got shape {inputs.shape}")
    preds, trace = forward_batch(params, inputs[None, :, :])
    return float(preds[0]), trace


def mse_loss(predictions, targets) -> float:
    """Mean squared residual."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape or p.size == 0:
        raise ValueError(f"length mismatch or empty: {p.shape} vs {y.shape}")
    return float(np.mean((p - y) ** 2))


# ---------------------------------------------------------------------------
# Backward


def bptt(params: LstmParams, trace: Trace,
         dh_steps: np.ndarray | None = None,
         dh_final: np.ndarray | None = None,
         dc_final: np.ndarray | None = None,
         ) -> tuple[Gradients, np.ndarray, np.ndarray]:
    """Reverse-time gradient accumulation through a recorded forward pass.

    ``dh_steps`` (L, B, H) injects a loss gradient into each step's hidden
    output; ``dh_final``/``dc_final`` inject into the final state only. Both
    may be combined. Returns gate-parameter gradients (head fields zero) plus
    the gradients flowing into the initial state, which lets a decoder's
    backward pass seed its encoder's.

    Steps accumulate in a fixed reverse-time order, so results are
    reproducible for identical inputs.
    """
    B, L, _ = trace.X.shape
    H = params.H
    dh = np.zeros((B, H)) if dh_final is None else dh_final.copy()
    dc = np.zeros((B, H)) if dc_final is None else dc_final.copy()
    dWx = np.zeros_like(params.Wx)
    dWh = np.zeros_like(params.Wh)
    db = np.zeros_like(params.b)

    for t in range(L - 1, -1, -1):
        if dh_steps is not None:
            dh = dh + dh_steps[t]
        i, f, g, o = trace.i[t], trace.f[t], trace.g[t], trace.o[t]
        tc = trace.tanh_c[t]
        c_prev = trace.c[t - 1] if t > 0 else trace.c0
        h_prev = trace.h[t - 1] if t > 0 else trace.h0

        do = dh * tc
        dc = dc + dh * o * (1.0 - tc ** 2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev

        da = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f),
                             dg * (1.0 - g ** 2), do * o * (1.0 - o)], axis=1)
        dWx += da.T @ trace.X[:, t, :]
        dWh += da.T @ h_prev
        db += da.sum(axis=0)
        dh = da @ params.Wh
        dc = dc * f

    grads = Gradients(Wx=dWx, Wh=dWh, b=db,
                      w_out=np.zeros_like(params.w_out), b_out=0.0)
    return grads, dh, dc


def backward(params: LstmParams, targets: np.ndarray, trace: Trace) -> tuple[float, Gradients]:
    """Exact gradients of the batch MSE with respect to every parameter.

    Clipping is a separate step (:func:`clip_gradients`).
    """
    y = np.asarray(targets, dtype=np.float64)
    B, L, _ = trace.X.shape
    if y.shape != (B,):
        raise ValueError(f"expected targets ({B},), got {y.shape}")
    resid = trace.preds - y
    loss = float(np.mean(resid ** 2))

    dpred = 2.0 * resid / B
    dw_out = trace.h[L - 1].T @ dpred
    db_out = float(dpred.sum())
    dh_final = np.outer(dpred, params.w_out)
    grads, _, _ = bptt(params, trace, dh_final=dh_final)
    grads.w_out = dw_out
    grads.b_out = db_out
    return loss, grads


def global_norm(grads: Gradients) -> float:
    return float(np.sqrt(np.sum(grads.flatten() ** 2)))


def clip_gradients(grads: Gradients, max_norm: float) -> tuple[Gradients, float]:
    """Scale all gradients so the global L2 norm is at most ``max_norm``.

    Returns (possibly rescaled gradients, pre-clip norm).
    """
    norm = global_norm(grads)
    if norm > max_norm:
        return grads.scaled(max_norm / norm), norm
    return grads, norm


def adam_step(params: LstmParams, grads: Gradients, optim: OptimState,
              cfg: TrainConfig) -> tuple[LstmParams, OptimState]:
    """Bias-corrected Adam update; returns new params and optimizer state."""
    b1, b2, eps = cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps
    t = optim.t + 1
    lr = cfg.learning_rate
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t

    def upd(p, g, m, v):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * g * g
        p_new = p - lr * (m_new / c1) / (np.sqrt(v_new / c2) + eps)
        return p_new, m_new, v_new

    Wx, mWx, vWx = upd(params.Wx, grads.Wx, optim.m.Wx, optim.v.Wx)
    Wh, mWh, vWh = upd(params.Wh, grads.Wh, optim.m.Wh, optim.v.Wh)
    b, mb, vb = upd(params.b, grads.b, optim.m.b, optim.v.b)
    w_out, mw, vw = upd(params.w_out, grads.w_out, optim.m.w_out, optim.v.w_out)
    b_out, mbo, vbo = upd(np.float64(params.b_out), np.float64(grads.b_out),
                          np.float64(optim.m.b_out), np.float64(optim.v.b_out))

    new_params = LstmParams(Wx=Wx, Wh=Wh, b=b, w_out=w_out, b_out=float(b_out))
    new_optim = OptimState(
        m=Gradients(mWx, mWh, mb, mw, float(mbo)),
        v=Gradients(vWx, vWh, vb, vw, float(vbo)),
        t=t,
    )
    return new_params, new_optim


# ---------------------------------------------------------------------------
# Gradient verification


def wide_loss(theta: np.ndarray, H: int, F: int, X: np.ndarray, y: np.ndarray,
              state0=None, per_step: bool = False) -> np.longdouble:
    """MSE computed from a flat parameter vector in the widest float dtype.

    A separate extended-precision forward pass keeps the finite-difference
    noise floor far below the gradients being checked; on x86 longdouble is
    80-bit. With ``per_step`` the head is applied at every step and the MSE
    runs over (sample, step) pairs.
    """
    th = np.asarray(theta, dtype=np.longdouble)
    i = 0
    Wx = th[i:i + 4 * H * F].reshape(4 * H, F); i += 4 * H * F
    Wh = th[i:i + 4 * H * H].reshape(4 * H, H); i += 4 * H * H
    b = th[i:i + 4 * H]; i += 4 * H
    w_out = th[i:i + H]; i += H
    b_out = th[i]
    Xl = np.asarray(X, dtype=np.longdouble)
    yl = np.asarray(y, dtype=np.longdouble)
    B, L, _ = Xl.shape
    if state0 is None:
        h = np.zeros((B, H), dtype=np.longdouble)
        c = np.zeros((B, H), dtype=np.longdouble)
    else:
        h = np.asarray(state0[0], dtype=np.longdouble)
        c = np.asarray(state0[1], dtype=np.longdouble)
    step_preds = []
    for t in range(L):
        pre = Xl[:, t, :] @ Wx.T + h @ Wh.T + b
        i_g = sigmoid(pre[:, 0:H])
        f_g = sigmoid(pre[:, H:2 * H])
        g_g = np.tanh(pre[:, 2 * H:3 * H])
        o_g = sigmoid(pre[:, 3 * H:4 * H])
        c = f_g * c + i_g * g_g
        h = o_g * np.tanh(c)
        if per_step:
            step_preds.append(h @ w_out + b_out)
    if per_step:
        preds = np.stack(step_preds, axis=1)  # (B, L)
        return np.mean((preds - yl) ** 2), (h, c)
    preds = h @ w_out + b_out
    return np.mean((preds - yl) ** 2), (h, c)


def grad_check(params: LstmParams, inputs: np.ndarray, target: float,
               eps: float = 1e-5) -> float:
    """Central-difference check of every parameter gradient on one window.

    Returns max over parameters of |analytic - numeric| divided by
    max(|analytic|, |numeric|, 1e-12). The numeric side runs in the widest
    available float precision.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    inputs = np.asarray(inputs, dtype=np.float64)
    X = inputs[None, :, :]
    y = np.array([target], dtype=np.float64)

    _, trace = forward_batch(params, X)
    _, grads = backward(params, y, trace)
    analytic = grads.flatten()

    theta = params.flatten().astype(np.longdouble)
    H, F = params.H, params.F

    numeric = np.empty(theta.size)
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = eps
        lo, _ = wide_loss(theta - step, H, F, X, y)
        hi, _ = wide_loss(theta + step, H, F, X, y)
        numeric[j] = float((hi - lo) / (2.0 * np.longdouble(eps)))

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric) / denom))
