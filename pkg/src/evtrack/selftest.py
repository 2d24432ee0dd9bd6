"""Self-contained release checks: oracles, invariants, and gradient checks
runnable from the CLI without a test framework.

Each check returns (name, passed, detail). The oracles here are written
independently of the code paths they verify (plain loops, closed forms,
or numpy eigendecompositions).
"""

from __future__ import annotations

import numpy as np

from . import losses as L
from .config import PipelineConfig, toy_pipeline_config
from .errors import ParameterError
from .events import EventBin, HandParams, SensorGeometry, synth_hand_events
from .geomstats import aux_labels
from .metrics import JointSet, auc, default_thresholds, pck_curve
from .nn import autograd as ag
from .nn import network as net
from .nn.training import check_gradients
from .pipeline import process_bin
from .representation import (
    Frame,
    ReprSpec,
    compress_channels,
    gaussian_blur,
    gaussian_kernel_1d,
    lnes_fast,
)
from .roi import RoiBox, locate_wrist


class CheckResult:
    def __init__(self, name, passed, detail=""):
        self.name = name
        self.passed = passed
        self.detail = detail


def _random_bin(rng, geometry, n, t0, window):
    t = np.sort(rng.integers(max(0, t0 - 2 * window), t0 + 1, size=n))
    x = rng.integers(0, geometry.width, size=n)
    y = rng.integers(0, geometry.height, size=n)
    p = rng.integers(0, 2, size=n).astype(np.uint8)
    return EventBin(t, x, y, p, t0, geometry)


def _brute_force_lnes(bin: EventBin, window):
    """Independent oracle: per-pixel max of window-normalized age over all
    in-window events, plain python loop."""
    g = bin.geometry
    img = np.zeros((g.height, g.width), dtype=np.float64)
    for i in range(len(bin)):
        age = bin.t0 - int(bin.t[i])
        if age > window:
            continue
        w = (window - age) / float(window)
        yy, xx = int(bin.y[i]), int(bin.x[i])
        if w > img[yy, xx]:
            img[yy, xx] = w
    return img.astype(np.float32)


def check_lnes_oracle(rng, bins=20):
    geometry = SensorGeometry(64, 48)
    for _ in range(bins):
        window = int(rng.integers(1_000, 200_000))
        t0 = int(rng.integers(window, 10 * window))
        bin = _random_bin(rng, geometry, int(rng.integers(0, 3000)), t0, window)
        frame, _ = lnes_fast(bin, ReprSpec(window_us=window, theta=None))
        if not np.array_equal(frame.values, _brute_force_lnes(bin, window)):
            return CheckResult("lnes-oracle", False, "mismatch vs brute force")
    return CheckResult("lnes-oracle", True, f"{bins} random bins exact")


def check_early_stop(rng):
    geometry = SensorGeometry(64, 48)
    window, t0, theta = 100_000, 500_000, 100
    bin = _random_bin(rng, geometry, 1000, t0, window)
    frame, count = lnes_fast(bin, ReprSpec(window_us=window, theta=theta))
    if count > theta:
        return CheckResult("early-stop", False, f"count {count} > theta")
    in_window = np.flatnonzero(t0 - bin.t <= window)
    newest = in_window[-min(theta, in_window.size) :]
    ref = EventBin(
        bin.t[newest], bin.x[newest], bin.y[newest], bin.p[newest], t0, geometry
    )
    expect = _brute_force_lnes(ref, window)
    ok = (
        np.array_equal(frame.values, expect)
        and count == min(theta, in_window.size)
        and frame.values.min() >= 0
        and frame.values.max() <= 1
    )
    return CheckResult("early-stop", ok, f"count={count}")


def check_channel_compression(rng):
    geometry = SensorGeometry(32, 32)
    t = np.repeat(np.sort(rng.integers(0, 1000, size=200)), 2)
    x = np.repeat(rng.integers(0, 32, size=200), 2)
    y = np.repeat(rng.integers(0, 32, size=200), 2)
    opposite = np.tile([0, 1], 200).astype(np.uint8)
    same = np.ones(400, dtype=np.uint8)
    spec = ReprSpec(window_us=1000, theta=None)
    f1, _ = lnes_fast(compress_channels(EventBin(t, x, y, opposite, 1000, geometry)), spec)
    f2, _ = lnes_fast(compress_channels(EventBin(t, x, y, same, 1000, geometry)), spec)
    ok = np.array_equal(f1.values, f2.values)
    return CheckResult("channel-compression", ok, "duplicate polarity pairs")


def check_blur_mass(rng):
    for k in (3, 5, 7):
        for sigma in (0.5, 1.0, 2.0):
            taps = gaussian_kernel_1d(k, sigma)
            if abs(taps.sum() - 1.0) > 1e-9:
                return CheckResult("blur-mass", False, f"kernel sum k={k}")
            values = np.zeros((40, 40), dtype=np.float64)
            values[k:-k, k:-k] = rng.random((40 - 2 * k, 40 - 2 * k))
            frame = Frame(values, SensorGeometry(40, 40))
            out = gaussian_blur(frame, k, sigma)
            if abs(out.values.sum() - values.sum()) > 1e-6 * max(values.sum(), 1):
                return CheckResult("blur-mass", False, f"mass lost k={k} sigma={sigma}")
    return CheckResult("blur-mass", True, "kernels normalized, mass conserved")


def check_wrist_roi(rng, cases=30, geometry=SensorGeometry()):
    spec = ReprSpec()
    hits = 0
    for _ in range(cases):
        params = HandParams(
            geometry=geometry,
            wrist_row=int(rng.integers(int(geometry.height * 0.5), int(geometry.height * 0.85))),
            center_x=int(rng.integers(int(geometry.width * 0.25), int(geometry.width * 0.75))),
            wrist_half_width=int(rng.integers(9, 16)),
            palm_half_width=int(rng.integers(26, 40)),
            count=int(rng.integers(3000, 6000)),
        )
        bin, truth = synth_hand_events(params, seed=int(rng.integers(0, 2**31)))
        frame, _ = lnes_fast(compress_channels(bin), spec)
        blurred = gaussian_blur(frame, spec.kernel, spec.sigma)
        wrist = locate_wrist(blurred)
        if wrist is not None and abs(wrist.y - truth.y) <= 5:
            hits += 1
    empty = Frame(np.zeros((geometry.height, geometry.width), np.float32), geometry)
    absent_ok = locate_wrist(empty) is None
    ok = hits >= int(0.95 * cases) and absent_ok
    return CheckResult("wrist-roi", ok, f"{hits}/{cases} within 5 px, absent={absent_ok}")


def check_geomstats_oracle(rng, cases=200):
    geometry = SensorGeometry(200, 200)
    box = RoiBox(20, 30, 160, 160)
    for _ in range(cases):
        n = int(rng.integers(2, 400))
        x = rng.integers(box.x0, box.x0 + box.w, size=n)
        y = rng.integers(box.y0, box.y0 + box.h, size=n)
        t = np.sort(rng.integers(0, 1000, size=n))
        bin = EventBin(t, x, y, np.ones(n, np.uint8), 1000, geometry)
        stats = aux_labels(bin, box)
        xs, ys = (x - box.x0).astype(float), (y - box.y0).astype(float)
        cov = np.cov(np.stack([xs, ys]), bias=True)
        evals, evecs = np.linalg.eigh(np.atleast_2d(cov))
        ne = float(max(box.w - 1, box.h - 1)) ** 2
        lam = np.sort(evals)[::-1] / ne
        if abs(stats.eig_major - lam[0]) > 1e-9 or abs(stats.eig_minor - lam[1]) > 1e-9:
            return CheckResult("geomstats-oracle", False, "eigenvalue mismatch")
        v = evecs[:, np.argmax(evals)]
        ang = np.arctan2(v[1], v[0]) % np.pi
        # compare on the half-circle; skip near-isotropic cases
        if evals.max() - evals.min() > 1e-9:
            diff = abs(stats.theta - ang / np.pi)
            if min(diff, 1 - diff) > 1e-9:
                return CheckResult("geomstats-oracle", False, "angle mismatch")
    single = EventBin([5], [30], [40], [1], 10, geometry)
    s = aux_labels(single, box)
    degenerate_ok = (
        s.std_x == s.std_y == s.eig_major == s.eig_minor == s.theta == 0.0
    )
    return CheckResult("geomstats-oracle", degenerate_ok, f"{cases} random sets")


def check_taylor_softmax(rng, cases=2000, order=2):
    try:
        logits = rng.uniform(-2, 2, size=(cases, 8))
        out = ag.taylor_softmax(ag.as_tensor(logits), axis=-1, order=order).data
    except ParameterError as exc:
        return CheckResult("taylor-softmax", False, f"parameter error: {exc}")
    exact = np.exp(logits)
    exact /= exact.sum(axis=-1, keepdims=True)
    dev = float(np.abs(out - exact).max())
    ok = out.min() > 0 and np.abs(out.sum(axis=-1) - 1).max() < 1e-6 and dev <= 0.02
    note = "" if order >= 6 else " (0.02 needs order >= 6; order-2 truncation tops out near 0.33 on this range)"
    return CheckResult(
        "taylor-softmax", ok, f"order {order}: max |taylor-exact| = {dev:.4f}{note}"
    )


def check_gradients_suite(rng, instances=3, inject_fault=False):
    worst = {}

    def record(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(instances):
        x = ag.Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        w = ag.Tensor(rng.normal(size=(5, 4)), requires_grad=True)
        b = ag.Tensor(rng.normal(size=(4,)), requires_grad=True)
        t = rng.normal(size=(3, 4))
        record(
            "linear",
            check_gradients(lambda: L._mse(ag.linear(x, w, b), t), [x, w, b]),
        )

        xc = ag.Tensor(rng.normal(size=(2, 3, 6, 6)), requires_grad=True)
        wc = ag.Tensor(rng.normal(size=(4, 3, 3, 3)), requires_grad=True)
        bc = ag.Tensor(rng.normal(size=(4,)), requires_grad=True)
        tc = rng.normal(size=(2, 4, 3, 3))
        record(
            "conv2d",
            check_gradients(
                lambda: L._mse(ag.conv2d(xc, wc, bc, stride=2, padding=1), tc),
                [xc, wc, bc],
            ),
        )

        c = 4
        blk = {
            "expand.w": ag.Tensor(rng.normal(size=(2 * c, c, 1, 1)) * 0.5, requires_grad=True),
            "expand.b": ag.Tensor(rng.normal(size=(2 * c,)) * 0.5, requires_grad=True),
            "dw.w": ag.Tensor(rng.normal(size=(2 * c, 1, 3, 3)) * 0.5, requires_grad=True),
            "dw.b": ag.Tensor(rng.normal(size=(2 * c,)) * 0.5, requires_grad=True),
            "project.w": ag.Tensor(rng.normal(size=(c, 2 * c, 1, 1)) * 0.5, requires_grad=True),
            "project.b": ag.Tensor(rng.normal(size=(c,)) * 0.5, requires_grad=True),
        }
        xi = ag.Tensor(rng.normal(size=(2, c, 5, 5)), requires_grad=True)
        ti = rng.normal(size=(2, c, 5, 5))
        record(
            "inverted-residual",
            check_gradients(
                lambda: L._mse(net.inverted_residual(xi, blk, stride=1), ti),
                [xi] + list(blk.values()),
            ),
        )

        d = 5
        attn = {
            "score.w": ag.Tensor(rng.normal(size=(d, 1)), requires_grad=True),
            "key.w": ag.Tensor(rng.normal(size=(d, d)), requires_grad=True),
            "value.w": ag.Tensor(rng.normal(size=(d, d)), requires_grad=True),
            "out.w": ag.Tensor(rng.normal(size=(d, d)), requires_grad=True),
        }
        tok = ag.Tensor(rng.normal(size=(2, 4, d)), requires_grad=True)
        tt = rng.normal(size=(2, 4, d))
        record(
            "attention",
            check_gradients(
                lambda: L._mse(net.separable_linear_attention(tok, attn, 2), tt),
                [tok] + list(attn.values()),
            ),
        )

        p = ag.Tensor(rng.normal(size=(2, 12)), requires_grad=True)
        a = ag.Tensor(rng.normal(size=(2, 7)), requires_grad=True)
        tp, ta = rng.normal(size=(2, 12)), rng.normal(size=(2, 7))
        record(
            "loss-total",
            check_gradients(
                lambda: L.loss_total(L.loss_main(p, tp), L.loss_aux(a, ta)), [p, a]
            ),
        )

    if inject_fault:
        worst["linear"] = max(worst["linear"], 1.0)  # simulated broken gradient

    results = []
    for name, err in worst.items():
        results.append(
            CheckResult(f"gradcheck-{name}", err < 1e-4, f"max rel err {err:.2e}")
        )
    return results


def check_full_net_gradcheck(rng):
    cfg = net.NetConfig(
        input_h=16,
        input_w=16,
        stem_channels=(3, 4),
        stage_channels=(4, 5, 6),
        attn_dims=(6, 6),
        fc_dim=6,
    )
    weights = net.init_weights(cfg, seed=int(rng.integers(0, 2**31))).astype(np.float64)
    for t in weights.tensors.values():
        if t.data.ndim == 1:
            # zero biases put ReLU pre-activations exactly at the kink in
            # zero-padded regions, where finite differences are undefined
            t.data = t.data + rng.normal(0.0, 0.05, t.data.shape)
    x = rng.normal(size=(1, 1, 16, 16)) * 0.5 + 0.5
    offs = rng.random((1, 2))
    tp = rng.normal(size=(1, 12))
    ta = rng.normal(size=(1, 7))

    def build():
        main, aux = net.forward_batch(x, offs, weights, cfg, with_aux=True)
        return L.loss_total(L.loss_main(main, tp), L.loss_aux(aux, ta))

    err = check_gradients(
        build, list(weights.tensors.values()), sample=6, rng=rng
    )
    return CheckResult("gradcheck-full-net", err < 1e-4, f"max rel err {err:.2e}")


def check_flop_ratio(config: PipelineConfig):
    default = net.NetConfig()
    ratio = net.count_flops(default, 160, 160) / net.count_flops(default, 180, 240)
    ok = 0.52 <= ratio <= 0.62
    return CheckResult("flop-ratio", ok, f"160x160 / 240x180 = {ratio:.4f}")


def check_loss_arithmetic():
    w = L.LossWeights()
    pred = np.zeros((1, 12))
    target = np.ones((1, 12))
    main = L.loss_main(pred, target, w).item()  # every component MSE = 1
    total = L.loss_total(
        L.loss_main(pred, target, w), L.loss_aux(np.zeros((1, 7)), np.ones((1, 7))), w
    ).item()
    ok = main == 2510.0 and abs(total - 2510.5) < 1e-9
    return CheckResult("loss-arithmetic", ok, f"main={main}, total={total}")


def check_metrics(rng, cases=10):
    for _ in range(cases):
        n = int(rng.integers(2, 8))
        gts = [JointSet(rng.normal(size=(21, 2)) * 10) for _ in range(n)]
        preds = [JointSet(g.joints + rng.normal(size=(21, 2))) for g in gts]
        thresholds = default_thresholds()
        curve = pck_curve(preds, gts, thresholds)
        # independent recount, plain loops
        correct = np.zeros(thresholds.size)
        total = 0
        for pred, gt in zip(preds, gts):
            palm = np.linalg.norm(gt.joints[9] - gt.joints[0])
            for j in range(21):
                if j == 0:
                    continue
                pe = pred.joints[j] - pred.joints[0]
                ge = gt.joints[j] - gt.joints[0]
                err = np.linalg.norm(pe - ge) / palm
                total += 1
                for k, tau in enumerate(thresholds):
                    if err <= tau:
                        correct[k] += 1
        if not np.array_equal(curve.values, correct / total):
            return CheckResult("metrics-recount", False, "curve mismatch")
    perfect = pck_curve([gts[0]], [gts[0]])
    ok = auc(perfect) == 1.0
    return CheckResult("metrics-recount", ok, f"{cases} cases exact, perfect AUC=1")


def check_forward_determinism(rng):
    cfg = net.toy_config()
    weights = net.init_weights(cfg, seed=3)
    x = rng.random((2, 1, cfg.input_h, cfg.input_w), dtype=np.float32)
    offs = rng.random((2, 2)).astype(np.float32)
    a, _ = net.forward_batch(x, offs, weights, cfg)
    b, _ = net.forward_batch(x, offs, weights, cfg)
    return CheckResult(
        "forward-determinism", np.array_equal(a.data, b.data), "bit-identical repeat"
    )


def run_all(config: PipelineConfig | None = None, inject_fault=None, seed=1234):
    """Run every check; returns a list of CheckResult."""
    config = config or toy_pipeline_config()
    rng = np.random.default_rng(seed)
    results = [
        check_lnes_oracle(rng),
        check_early_stop(rng),
        check_channel_compression(rng),
        check_blur_mass(rng),
        check_wrist_roi(rng),
        check_geomstats_oracle(rng),
        check_taylor_softmax(rng, order=config.net.taylor_order),
    ]
    results += check_gradients_suite(rng, inject_fault=(inject_fault == "gradient"))
    results.append(check_full_net_gradcheck(rng))
    results.append(check_flop_ratio(config))
    results.append(check_loss_arithmetic())
    results.append(check_metrics(rng))
    results.append(check_forward_determinism(rng))
    return results
