"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Tolerances are pinned here, not configurable.

Criterion 7's deviation bound (order-2 polynomial softmax within 0.02 of
the exact softmax on [-2, 2]^8) is not attainable as stated; the test
asserts the stated bound and is expected to stay red. See the analysis in
the taylor-softmax check message and the package README.
"""

import time

import numpy as np
import pytest

from evtrack import losses as L
from evtrack.cli import main
from evtrack.config import toy_pipeline_config
from evtrack.events import EventBin, HandParams, SensorGeometry, synth_hand_events
from evtrack.geomstats import aux_labels
from evtrack.metrics import JointSet, auc, default_thresholds, pck_curve
from evtrack.nn import autograd as ag
from evtrack.nn import network as net
from evtrack.nn.training import check_gradients
from evtrack.representation import (
    Frame,
    ReprSpec,
    compress_channels,
    gaussian_blur,
    gaussian_kernel_1d,
    lnes_fast,
)
from evtrack.roi import RoiBox, locate_wrist


def report(num, ok, detail):
    print(f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


def brute_force_lnes(bin, window):
    img = np.zeros((bin.geometry.height, bin.geometry.width), dtype=np.float64)
    for i in range(len(bin)):
        age = bin.t0 - int(bin.t[i])
        if age > window:
            continue
        w = (window - age) / float(window)
        yy, xx = int(bin.y[i]), int(bin.x[i])
        if w > img[yy, xx]:
            img[yy, xx] = w
    return img.astype(np.float32)


def random_bin(rng, geometry, n, t0, window):
    t = np.sort(rng.integers(max(0, t0 - 2 * window), t0 + 1, size=n))
    x = rng.integers(0, geometry.width, size=n)
    y = rng.integers(0, geometry.height, size=n)
    p = rng.integers(0, 2, size=n).astype(np.uint8)
    return EventBin(t, x, y, p, t0, geometry)


def test_criterion_01_lnes_oracle_equivalence():
    rng = np.random.default_rng(100)
    g = SensorGeometry(346, 260)
    start = time.perf_counter()
    exact = True
    for _ in range(100):
        window = int(rng.integers(1_000, 500_000))
        t0 = int(rng.integers(window, 10 * window))
        bin = random_bin(rng, g, int(rng.integers(0, 10_000)), t0, window)
        frame, _ = lnes_fast(bin, ReprSpec(window_us=window, theta=None))
        exact &= bool(np.array_equal(frame.values, brute_force_lnes(bin, window)))
    elapsed = time.perf_counter() - start
    ok = exact and elapsed < 5.0
    assert report(1, ok, f"100 bins exact={exact}, {elapsed:.2f}s (< 5s)")


def test_criterion_02_early_stop_contract():
    rng = np.random.default_rng(101)
    g = SensorGeometry(346, 260)
    ok = True
    for _ in range(20):
        window = 100_000
        t0 = int(rng.integers(window, 5 * window))
        bin = random_bin(rng, g, 1000, t0, window)
        frame, count = lnes_fast(bin, ReprSpec(window_us=window, theta=100))
        in_window = np.flatnonzero(t0 - bin.t <= window)
        newest = in_window[-min(100, in_window.size):]
        ref = EventBin(bin.t[newest], bin.x[newest], bin.y[newest],
                       bin.p[newest], t0, g)
        ok &= count <= 100
        ok &= count == min(100, in_window.size)
        ok &= bool(np.array_equal(frame.values, brute_force_lnes(ref, window)))
        ok &= 0.0 <= frame.values.min() and frame.values.max() <= 1.0
    assert report(2, ok, "theta=100 retains the 100 newest, values in [0,1]")


def test_criterion_03_channel_compression_bit_identical():
    rng = np.random.default_rng(102)
    g = SensorGeometry(346, 260)
    ok = True
    for _ in range(10):
        n = 400
        t = np.repeat(np.sort(rng.integers(0, 90_000, size=n)), 2)
        x = np.repeat(rng.integers(0, g.width, size=n), 2)
        y = np.repeat(rng.integers(0, g.height, size=n), 2)
        opposite = np.tile([0, 1], n).astype(np.uint8)
        same = np.ones(2 * n, dtype=np.uint8)
        spec = ReprSpec(window_us=100_000, theta=None)
        fa, _ = lnes_fast(compress_channels(EventBin(t, x, y, opposite, 100_000, g)), spec)
        fb, _ = lnes_fast(compress_channels(EventBin(t, x, y, same, 100_000, g)), spec)
        ok &= bool(np.array_equal(fa.values, fb.values))
    assert report(3, ok, "opposite-polarity duplicates == single-polarity duplicates")


def test_criterion_04_blur_mass_conservation():
    rng = np.random.default_rng(103)
    kernel_ok = True
    for k in (3, 5, 7):
        for sigma in (0.5, 1.0, 2.0):
            kernel_ok &= abs(gaussian_kernel_1d(k, sigma).sum() - 1.0) < 1e-9
    mass_ok = True
    g = SensorGeometry(64, 64)
    for k in (3, 5, 7):
        for sigma in (0.5, 1.0, 2.0):
            impulse = np.zeros((64, 64))
            impulse[32, 32] = 1.0
            rand = np.zeros((64, 64))
            rand[k:-k, k:-k] = rng.random((64 - 2 * k, 64 - 2 * k))
            for values in (impulse, rand):
                frame = Frame(values, g)
                out = gaussian_blur(frame, k, sigma)
                mass_ok &= abs(out.values.sum() - values.sum()) <= 1e-6 * max(values.sum(), 1.0)
    ok = kernel_ok and mass_ok
    assert report(4, ok, f"kernel sums 1e-9 ok={kernel_ok}, mass 1e-6 ok={mass_ok}")


def test_criterion_05_wrist_roi_accuracy():
    rng = np.random.default_rng(104)
    g = SensorGeometry(346, 260)
    spec = ReprSpec()
    hits = 0
    cases = 120
    for _ in range(cases):
        params = HandParams(
            geometry=g,
            wrist_row=int(rng.integers(int(g.height * 0.5), int(g.height * 0.85))),
            center_x=int(rng.integers(int(g.width * 0.25), int(g.width * 0.75))),
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
    absent = locate_wrist(Frame(np.zeros((260, 346), np.float32), g)) is None
    ok = hits >= int(np.ceil(0.95 * cases)) and absent
    assert report(5, ok, f"{hits}/{cases} within 5 px (need 95%), absent-on-empty={absent}")


def test_criterion_06_geomstats_oracle():
    rng = np.random.default_rng(105)
    g = SensorGeometry(400, 400)
    box = RoiBox(20, 30, 160, 160)
    ok = True
    for _ in range(1000):
        n = int(rng.integers(2, 300))
        x = rng.integers(box.x0, box.x0 + box.w, size=n)
        y = rng.integers(box.y0, box.y0 + box.h, size=n)
        t = np.sort(rng.integers(0, 1000, size=n))
        stats = aux_labels(EventBin(t, x, y, np.ones(n, np.uint8), 1000, g), box)
        xs, ys = (x - box.x0).astype(float), (y - box.y0).astype(float)
        evals, evecs = np.linalg.eigh(np.cov(np.stack([xs, ys]), bias=True))
        ne = float(max(box.w - 1, box.h - 1)) ** 2
        ok &= abs(stats.eig_major - evals[1] / ne) < 1e-9
        ok &= abs(stats.eig_minor - max(evals[0], 0.0) / ne) < 1e-9
        if evals[1] - evals[0] > 1e-9:
            v = evecs[:, 1]
            ang = np.arctan2(v[1], v[0]) % np.pi
            diff = abs(stats.theta - ang / np.pi)
            ok &= min(diff, 1.0 - diff) < 1e-9
    single = aux_labels(
        EventBin([5], [box.x0 + 7], [box.y0 + 9], [1], 10, g), box
    )
    degenerate = (
        single.std_x == 0 and single.std_y == 0
        and single.eig_major == 0 and single.eig_minor == 0 and single.theta == 0
    )
    ok = ok and degenerate
    assert report(6, ok, f"1000 sets vs eigh at 1e-9, degenerate-zero={degenerate}")


def test_criterion_07_taylor_softmax():
    rng = np.random.default_rng(106)
    logits = rng.uniform(-2.0, 2.0, size=(10_000, 8))
    out = ag.taylor_softmax(ag.as_tensor(logits), axis=-1, order=2).data
    positive = bool(out.min() > 0)
    unit_sum = bool(np.abs(out.sum(axis=-1) - 1.0).max() < 1e-6)
    exact = np.exp(logits)
    exact /= exact.sum(axis=-1, keepdims=True)
    deviation = float(np.abs(out - exact).max())
    ok = positive and unit_sum and deviation <= 0.02
    report(
        7,
        ok,
        f"positive={positive}, unit-sum={unit_sum}, max deviation={deviation:.4f} "
        f"(stated bound 0.02; the order-2 truncation cannot meet it on [-2,2]^8)",
    )
    assert positive and unit_sum
    assert deviation <= 0.02, (
        f"order-2 polynomial softmax deviates {deviation:.4f} from the exact "
        "softmax on [-2,2]^8; the 0.02 bound holds only from order 6 upward"
    )


GRAD_INSTANCES = 20


def _gradcheck_instances(build_case, instances=GRAD_INSTANCES, **kw):
    worst = 0.0
    for i in range(instances):
        loss_fn, tensors = build_case(np.random.default_rng(1000 + i))
        worst = max(worst, check_gradients(loss_fn, tensors, **kw))
    return worst


def test_criterion_08_gradient_checks():
    results = {}

    def loss_case(rng):
        p = ag.Tensor(rng.normal(size=(2, 12)), requires_grad=True)
        a = ag.Tensor(rng.normal(size=(2, 7)), requires_grad=True)
        tp, ta = rng.normal(size=(2, 12)), rng.normal(size=(2, 7))
        return (lambda: L.loss_total(L.loss_main(p, tp), L.loss_aux(a, ta))), [p, a]

    results["loss_total"] = _gradcheck_instances(loss_case)

    def linear_case(rng):
        x = ag.Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        w = ag.Tensor(rng.normal(size=(5, 4)), requires_grad=True)
        b = ag.Tensor(rng.normal(size=(4,)), requires_grad=True)
        t = rng.normal(size=(3, 4))
        return (lambda: L._mse(ag.linear(x, w, b), t)), [x, w, b]

    results["linear"] = _gradcheck_instances(linear_case)

    def conv_case(rng):
        x = ag.Tensor(rng.normal(size=(2, 3, 6, 6)), requires_grad=True)
        w = ag.Tensor(rng.normal(size=(4, 3, 3, 3)), requires_grad=True)
        b = ag.Tensor(rng.normal(size=(4,)), requires_grad=True)
        t = rng.normal(size=(2, 4, 3, 3))
        return (lambda: L._mse(ag.conv2d(x, w, b, stride=2, padding=1), t)), [x, w, b]

    results["conv2d"] = _gradcheck_instances(conv_case)

    def ir_case(rng):
        c = 4
        blk = {
            "expand.w": ag.Tensor(rng.normal(size=(2 * c, c, 1, 1)) * 0.6, requires_grad=True),
            "expand.b": ag.Tensor(rng.normal(size=(2 * c,)) * 0.3, requires_grad=True),
            "dw.w": ag.Tensor(rng.normal(size=(2 * c, 1, 3, 3)) * 0.6, requires_grad=True),
            "dw.b": ag.Tensor(rng.normal(size=(2 * c,)) * 0.3, requires_grad=True),
            "project.w": ag.Tensor(rng.normal(size=(c, 2 * c, 1, 1)) * 0.6, requires_grad=True),
            "project.b": ag.Tensor(rng.normal(size=(c,)) * 0.3, requires_grad=True),
        }
        x = ag.Tensor(rng.normal(size=(2, c, 5, 5)), requires_grad=True)
        t = rng.normal(size=(2, c, 5, 5))
        return (
            lambda: L._mse(net.inverted_residual(x, blk, stride=1), t),
            [x] + list(blk.values()),
        )

    results["inverted_residual"] = _gradcheck_instances(ir_case)

    def attn_case(rng):
        d = 5
        attn = {
            "score.w": ag.Tensor(rng.normal(size=(d, 1)), requires_grad=True),
            "key.w": ag.Tensor(rng.normal(size=(d, d)), requires_grad=True),
            "value.w": ag.Tensor(rng.normal(size=(d, d)), requires_grad=True),
            "out.w": ag.Tensor(rng.normal(size=(d, d)), requires_grad=True),
        }
        tok = ag.Tensor(rng.normal(size=(2, 4, d)), requires_grad=True)
        t = rng.normal(size=(2, 4, d))
        return (
            lambda: L._mse(net.separable_linear_attention(tok, attn, 2), t),
            [tok] + list(attn.values()),
        )

    results["separable_attention"] = _gradcheck_instances(attn_case)

    tiny = net.NetConfig(
        input_h=12, input_w=12, stem_channels=(2, 3), stage_channels=(3, 4, 4),
        attn_dims=(4, 4), fc_dim=4,
    )

    def full_net_case(rng):
        weights = net.init_weights(tiny, seed=int(rng.integers(0, 2**31))).astype(np.float64)
        for t in weights.tensors.values():
            if t.data.ndim == 1:
                t.data = t.data + rng.normal(0.0, 0.05, t.data.shape)
        x = rng.normal(size=(1, 1, 12, 12)) * 0.5 + 0.5
        offs = rng.random((1, 2))
        tp, ta = rng.normal(size=(1, 12)), rng.normal(size=(1, 7))

        def loss():
            main, aux = net.forward_batch(x, offs, weights, tiny, with_aux=True)
            return L.loss_total(L.loss_main(main, tp), L.loss_aux(aux, ta))

        return loss, list(weights.tensors.values())

    results["full_network"] = _gradcheck_instances(
        full_net_case, sample=3, rng=np.random.default_rng(77)
    )

    worst = max(results.values())
    ok = worst < 1e-4
    detail = ", ".join(f"{k}={v:.1e}" for k, v in results.items())
    assert report(8, ok, f"20 instances each, rel err < 1e-4: {detail}")


def test_criterion_09_flop_ratio():
    cfg = net.NetConfig()
    roi = net.count_flops(cfg, 160, 160)
    full = net.count_flops(cfg, 180, 240)
    ratio = roi / full
    ok = 0.52 <= ratio <= 0.62
    assert report(9, ok, f"{roi}/{full} = {ratio:.4f} in [0.52, 0.62]")


def test_criterion_10_loss_arithmetic():
    w = L.LossWeights()
    main = L.loss_main(np.zeros(12), np.ones(12), w).item()
    aux = L.loss_aux(np.zeros(7), np.ones(7)).item()
    total = L.loss_total(
        L.loss_main(np.zeros(12), np.ones(12), w),
        L.loss_aux(np.zeros(7), np.ones(7)),
        w,
    ).item()
    ok = main == 2510.0 and total == main + 0.5 * aux
    assert report(10, ok, f"unit-component main={main} (expect 2510), total adds 0.5*aux")


def test_criterion_11_metrics():
    rng = np.random.default_rng(107)
    gts = [JointSet(rng.normal(0, 10, (21, 2))) for _ in range(5)]
    perfect = auc(pck_curve(gts, gts))

    preds = []
    for g in gts:
        palm = np.linalg.norm(g.joints[9] - g.joints[0])
        moved = g.joints.copy()
        moved[1:] += np.array([0.5 * palm, 0.0])
        preds.append(JointSet(moved))
    step_auc = auc(pck_curve(preds, gts, default_thresholds(100, 1.0)))

    recount_ok = True
    for _ in range(50):
        n = int(rng.integers(1, 6))
        dim = int(rng.integers(2, 4))
        case_gts = [JointSet(rng.normal(0, 10, (21, dim))) for _ in range(n)]
        case_preds = [JointSet(g.joints + rng.normal(0, 2, (21, dim))) for g in case_gts]
        thresholds = default_thresholds()
        curve = pck_curve(case_preds, case_gts, thresholds)
        correct = np.zeros(thresholds.size)
        total = 0
        for pred, gt in zip(case_preds, case_gts):
            palm = np.linalg.norm(gt.joints[9] - gt.joints[0])
            for j in range(1, 21):
                err = np.linalg.norm(
                    (pred.joints[j] - pred.joints[0]) - (gt.joints[j] - gt.joints[0])
                ) / palm
                total += 1
                correct += err <= thresholds
        recount_ok &= bool(np.array_equal(curve.values, correct / total))

    ok = perfect == 1.0 and abs(step_auc - 0.5) <= 0.01 and recount_ok
    assert report(
        11, ok,
        f"perfect AUC={perfect}, step AUC={step_auc:.4f} (0.5 +/- 0.01), recount exact={recount_ok}",
    )


def test_criterion_12_toy_training_smoke(tmp_path, capsys):
    # cmd_train_toy with the toy preset: seed 42, 300 steps, batch 32,
    # lr 1e-4; must halve the loss, rerun bit-identically, finish quickly
    cfg = toy_pipeline_config()
    assert cfg.seed == 42 and cfg.train.steps == 300
    assert cfg.train.batch == 32 and cfg.train.lr == 1e-4
    start = time.perf_counter()
    rc1 = main(["train-toy", "--out", str(tmp_path / "a.evhw")])
    log1 = capsys.readouterr().out
    rc2 = main(["train-toy", "--out", str(tmp_path / "b.evhw")])
    log2 = capsys.readouterr().out
    elapsed = time.perf_counter() - start

    lines = [l for l in log1.splitlines() if l.startswith("step ")]
    first = float(lines[0].split()[3])
    last = float(lines[-1].split()[3])
    reduction = 1.0 - last / first
    identical = log1.replace("a.evhw", "X") == log2.replace("b.evhw", "X") and (
        (tmp_path / "a.evhw").read_bytes() == (tmp_path / "b.evhw").read_bytes()
    )
    ok = rc1 == 0 and rc2 == 0 and reduction >= 0.5 and identical and elapsed < 600
    assert report(
        12, ok,
        f"loss {first:.1f} -> {last:.1f} ({100 * reduction:.0f}% >= 50%), "
        f"bit-identical rerun={identical}, {elapsed:.0f}s (< 600s)",
    )
