"""Exit-gate checks, one test per criterion.

Each test prints ``criterion N: PASS|FAIL (seconds) detail`` and the lines are
repeated in the pytest summary. Criteria 9 and 10 run the default benchmark
twice in subprocesses pinned to one BLAS thread (about 12 minutes in total).
Run just this file with ``pytest tests/test_acceptance.py -v``.
"""
import csv
import datetime as dt
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import brute_metrics, naive_conv, naive_layer, naive_spline, scalar_conv_lstm
from optkan.autograd import (Tensor, backward, clamp, concat, conv1d, einsum, elementwise,
                             getitem, gradcheck, matmul, pad_last, reshape, tsum, unfold_last)
from optkan.conv_kan import ConvKanModel, KanConvKernel1d, conv_kan_forward, kan_conv1d
from optkan.data import fit_norm, split_by_cutoff, window
from optkan.kan import (KanLayer, KanNetwork, SplineBasis, layer_forward, network_forward,
                        spline_eval)
from optkan.lstm import (ConvLstmCell, ConvLstmModel, LstmModel, LstmState, conv_lstm_step,
                         sequence_forward)
from optkan.pricing import OptionKind, bsm_price_array
from optkan.training import Adam, TrainConfig, evaluate, mse_loss, read_metrics_csv
from optkan.verify import mc_checks, parity_check, pde_check
from optkan.volatility import START_GRID, GarchParams, garch_fit, log_likelihood, simulate_garch

from test_data import CUTOFF, quote

METRICS = ("MSE", "RMSE", "MAE", "MAPE")
SLUGS = ("bs", "bsm", "lstm", "conv_lstm", "kan", "conv_kan")


def verdict(n, passed, seconds, budget, detail):
    ok = passed and seconds < budget
    line = (f"criterion {n}: {'PASS' if ok else 'FAIL'} ({seconds:.2f}s, budget {budget:g}s) "
            f"{detail}")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line
    assert seconds < budget, line


def test_criterion_1_pricing_identities():
    t0 = time.perf_counter()
    r = parity_check(n=1000)
    verdict(1, r.passed, time.perf_counter() - t0, 1.0,
            f"max parity residual {r.measured:.2e}, {r.detail}")


def test_criterion_2_monte_carlo():
    t0 = time.perf_counter()
    results = mc_checks(n_points=10, n_paths=1_000_000)
    worst = max(results, key=lambda r: r.measured / r.threshold)
    verdict(2, all(r.passed for r in results) and len(results) == 20,
            time.perf_counter() - t0, 30.0,
            f"{sum(r.passed for r in results)}/20 within 3 se; worst {worst.name} "
            f"gap {worst.measured:.2e} vs {worst.threshold:.2e}")


def test_criterion_3_pde_residual():
    t0 = time.perf_counter()
    r = pde_check()
    control = pde_check(negative_control=True)
    verdict(3, r.passed and not control.passed, time.perf_counter() - t0, 1.0,
            f"analytic {r.measured:.2e} vs payoff {r.threshold * 100:.2e} "
            f"(ratio {r.threshold * 100 / r.measured:.0f}x)")


def _weighted(out, seed=99):
    w = np.random.default_rng(seed).normal(size=out.shape)
    return tsum(elementwise("mul", out, Tensor(w)))


def _op_cases(rng):
    def p(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)
    a, b = p(3, 4), p(3, 4)
    m = p(4, 2)
    x3, c3 = p(2, 3, 4), p(2, 3, 4)
    cx, cw = p(2, 3, 9), p(4, 3, 3)
    e1, e2, e3 = p(3, 4, 6), p(2, 4, 6), p(2, 4)
    cases = {op: (lambda op=op: _weighted(elementwise(op, a, b)), [a, b])
             for op in ("add", "sub", "mul", "hadamard")}
    cases.update({op: (lambda op=op: _weighted(elementwise(op, a)), [a])
                  for op in ("silu", "sigmoid", "tanh")})
    cases.update({
        "matmul": (lambda: _weighted(matmul(a, m)), [a, m]),
        "conv1d": (lambda: _weighted(conv1d(cx, cw, stride=2, padding=1)), [cx, cw]),
        "einsum": (lambda: _weighted(einsum("...pn,ipn,ip->...i", e1, e2, e3)), [e1, e2, e3]),
        "reshape": (lambda: _weighted(reshape(x3, (6, 4))), [x3]),
        "getitem": (lambda: _weighted(getitem(x3, (slice(None), 1))), [x3]),
        "concat": (lambda: _weighted(concat([x3, c3], axis=2)), [x3, c3]),
        "pad": (lambda: _weighted(pad_last(x3, 1, 2)), [x3]),
        "unfold": (lambda: _weighted(unfold_last(x3, 2)), [x3]),
        "clamp": (lambda: _weighted(clamp(x3, -0.5, 0.5)), [x3]),
        "sum": (lambda: _weighted(tsum(x3, axis=1)), [x3]),
    })
    return cases


def test_criterion_4_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    op_err = {name: gradcheck(fn, ps) for name, (fn, ps) in _op_cases(rng).items()}
    kan = KanNetwork([2, 5, 1], SplineBasis(), np.random.default_rng(1))
    xk = Tensor(rng.uniform(-1.2, 1.2, size=(6, 2)))
    ckan = ConvKanModel(1, 2, 9, filters=[2], width=3, head_hidden=[4],
                        rng=np.random.default_rng(2))
    xc = Tensor(rng.uniform(-1.4, 1.4, size=(2, 1, 2, 9)))
    lstm = LstmModel(3, 4, np.random.default_rng(3))
    xl = Tensor(rng.normal(size=(2, 4, 1, 3)))
    clstm = ConvLstmModel(1, 5, 1, 3, np.random.default_rng(5))
    xcl = Tensor(rng.normal(size=(2, 3, 1, 5)))
    model_err = {
        "KAN[2,5,1]": gradcheck(lambda: tsum(network_forward(kan, xk)), kan.parameters()),
        "Conv-KAN": gradcheck(lambda: tsum(conv_kan_forward(ckan, xc)), ckan.parameters()),
        "LSTM h=4": gradcheck(lambda: tsum(sequence_forward(lstm, xl)), lstm.parameters()),
        "Conv-LSTM": gradcheck(lambda: tsum(sequence_forward(clstm, xcl)), clstm.parameters()),
    }
    worst_op = max(op_err, key=op_err.get)
    worst_model = max(model_err, key=model_err.get)
    verdict(4, max(op_err.values()) < 1e-6 and max(model_err.values()) < 1e-4,
            time.perf_counter() - t0, 120.0,
            f"{len(op_err)} ops worst {worst_op} {op_err[worst_op]:.1e}; "
            f"models worst {worst_model} {model_err[worst_model]:.1e}")


def test_criterion_5_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    basis = SplineBasis()
    coeffs = rng.normal(size=basis.n_basis)
    xs = np.linspace(-1.5, 1.5, 200)
    spline = np.max(np.abs(spline_eval(basis, coeffs, xs)
                           - [naive_spline(coeffs, x, basis) for x in xs]))

    layer = KanLayer(3, 4, basis, rng)
    layer.w_spline.data[:] = rng.normal(size=layer.w_spline.shape)
    layer.w_silu.data[:] = rng.normal(size=layer.w_silu.shape)
    lay = max(np.max(np.abs(layer_forward(layer, Tensor(x)).data - naive_layer(layer, x)))
              for x in rng.uniform(-2, 2, size=(20, 3)))

    kernel = KanConvKernel1d(2, 3, 3, 1, basis, rng)
    kernel.w_spline.data[:] = rng.normal(size=kernel.w_spline.shape)
    kernel.w_silu.data[:] = rng.normal(size=kernel.w_silu.shape)
    xcv = rng.uniform(-2, 2, size=(2, 11))
    conv = np.max(np.abs(kan_conv1d(Tensor(xcv), kernel).data - naive_conv(kernel, xcv)))

    cell = ConvLstmCell(1, 1, 6, 1, rng)
    for prm in cell.parameters():
        prm.data[...] = rng.normal(size=prm.shape)
    x, h, c = rng.normal(size=6), rng.normal(size=6), rng.normal(size=6)
    s = conv_lstm_step(cell, Tensor(x[None, None]),
                       LstmState(Tensor(h[None, None]), Tensor(c[None, None])))
    h_ref, c_ref = scalar_conv_lstm(cell, x, h, c)
    cl = max(np.max(np.abs(s.hidden.data[0, 0] - h_ref)),
             np.max(np.abs(s.cell.data[0, 0] - c_ref)))

    y = rng.normal(1.0, 0.5, size=500)
    y[:2] = [0.0, 1e-9]
    pred = y + rng.normal(0, 0.1, size=500)
    met = max(abs(a - b) for a, b in zip(evaluate(pred, y).values(), brute_metrics(pred, y)))

    errs = {"spline": (spline, 1e-12), "layer": (lay, 1e-12), "kan_conv1d": (conv, 1e-10),
            "conv_lstm": (cl, 1e-12), "metrics": (met, 1e-12)}
    verdict(5, all(e < tol for e, tol in errs.values()), time.perf_counter() - t0, 60.0,
            ", ".join(f"{k} {e:.1e}" for k, (e, _) in errs.items()))


def test_criterion_6_kan_fits_price_surface():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    n_train, n_test = 1000, 200
    money = rng.uniform(0.8, 1.2, n_train + n_test)
    ttm = rng.uniform(0.05, 1.0, n_train + n_test)
    # call price per unit strike, so the surface depends on moneyness and maturity only
    y = bsm_price_array(money, 1.0, 0.03, 0.01, 0.2, ttm, OptionKind.CALL)
    x = np.column_stack([money, ttm])
    x = (x - x[:n_train].mean(axis=0)) / x[:n_train].std(axis=0)
    y = (y - y[:n_train].mean()) / y[:n_train].std()
    net = KanNetwork([2, 5, 1], SplineBasis(), np.random.default_rng(7))
    opt = Adam(net.parameters(), TrainConfig(learning_rate=0.01))
    for _ in range(2000):
        idx = rng.integers(0, n_train, 64)
        loss = mse_loss(network_forward(net, Tensor(x[idx])), Tensor(y[idx, None]))
        opt.zero_grad()
        backward(loss)
        opt.step()
    pred = network_forward(net, Tensor(x[n_train:])).data[:, 0]
    rmse = float(np.sqrt(np.mean((pred - y[n_train:]) ** 2)))
    verdict(6, rmse < 0.05, time.perf_counter() - t0, 180.0, f"held-out RMSE {rmse:.4f}")


def test_criterion_7_garch():
    t0 = time.perf_counter()
    true = GarchParams(omega=2e-6, alpha=0.1, beta=0.85)
    r = simulate_garch(true, 10_000, seed=42)
    fit = garch_fit(r)
    best = log_likelihood(fit, r)
    var = float(np.var(r))
    grid_ok = all(best >= log_likelihood(GarchParams(var * (1 - a - b), a, b), r)
                  for a, b in START_GRID)
    da, dp = abs(fit.alpha - true.alpha), abs(fit.persistence - true.persistence)
    verdict(7, da <= 0.05 and dp <= 0.05 and grid_ok, time.perf_counter() - t0, 30.0,
            f"alpha {fit.alpha:.4f} (err {da:.4f}), alpha+beta {fit.persistence:.4f} "
            f"(err {dp:.4f}), beats start grid: {grid_ok}")


def test_criterion_8_data_protocol():
    t0 = time.perf_counter()
    days = [dt.date(2020, 8, 20) + dt.timedelta(days=i) for i in range(20)]
    rng = np.random.default_rng(8)
    qs = [quote("A", d, spot=4 + rng.normal(0, 0.1), target_price=rng.uniform(0.05, 0.3),
                time_to_maturity=0.2 - i / 365, delta=rng.uniform(0.2, 0.8),
                theoretical_price=rng.uniform(0.05, 0.3), garch_vol=rng.uniform(0.1, 0.3),
                risk_free_rate=rng.uniform(0.01, 0.03), dividend_rate=rng.uniform(0.001, 0.003),
                strike=4.0 + 0.05 * (i % 3), option_type=1 if i % 2 else -1)
          for i, d in enumerate(days)]
    issued = quote("W", CUTOFF, spot=4.2, target_price=0.12, strike=4.1)
    qs += [issued] + [quote("W", CUTOFF + dt.timedelta(days=k), spot=4.2, strike=4.1)
                      for k in (1, 2, 3)]
    split = split_by_cutoff(qs, CUTOFF)
    partition = (len(split.train) + len(split.test) == len(qs)
                 and all(q.date <= CUTOFF for q in split.train)
                 and all(q.date > CUTOFF for q in split.test))
    white_noise = [q for q in split.train if q.contract_id == "W"] == [issued]
    one, _ = window(split, fit_norm(split.train), 1)
    white_noise = white_noise and sum(q.contract_id == "W" for q in one.last) == 1

    stats = fit_norm(split.train)
    z = stats.apply(np.array([q.features() for q in split.train]))
    mean_err = float(np.max(np.abs(z.mean(axis=0))))
    var_err = float(np.max(np.abs(z.var(axis=0) - 1.0)))
    test_x = np.array([q.features() for q in split.test])
    y = np.array([q.target_price for q in split.test])
    round_trip = (np.max(np.abs(stats.invert(stats.apply(test_x)) - test_x)) < 1e-12
                  and np.max(np.abs(stats.invert_target(stats.apply_target(y)) - y)) < 1e-12)
    verdict(8, partition and white_noise and mean_err < 1e-10 and var_err < 1e-10 and round_trip,
            time.perf_counter() - t0, 30.0,
            f"partition {partition}, single-observation contract {white_noise}, "
            f"train mean {mean_err:.1e}, var-1 {var_err:.1e}, round trip {bool(round_trip)}")


def _single_thread_env():
    env = dict(os.environ)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        env[var] = "1"
    return env


@pytest.fixture(scope="module")
def default_benches(tmp_path_factory):
    runs = []
    for name in ("bench_a", "bench_b"):
        out = tmp_path_factory.mktemp(name)
        t0 = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "optkan.cli", "bench", "--out", str(out)],
                              env=_single_thread_env(), capture_output=True, text=True)
        runs.append((out, time.perf_counter() - t0, proc))
    return runs


def test_criterion_9_benchmark(default_benches):
    out, seconds, proc = default_benches[0]
    assert proc.returncode == 0, proc.stderr
    header, rows = read_metrics_csv(out / "metrics.csv")
    shape_ok = (len(rows) == 6 and all(len(r) == 5 for r in rows)
                and [r[0] for r in rows] == ["B-S", "B-S-M", "LSTM", "Conv-LSTM", "KANs",
                                             "Conv-KANs"])
    table_ok = (out / "metrics.txt").read_text().split()[:4] == list(METRICS)
    pred_ok = svg_ok = True
    for slug in SLUGS:
        with open(out / "predictions" / f"{slug}.csv") as fh:
            pred_ok &= len(list(csv.DictReader(fh))) == 240
        svg = out / "plots" / f"{slug}.svg"
        svg_ok &= svg.exists() and svg.read_text().lstrip().startswith("<?xml")
    n_train, n_test = int(header["n_train_obs"]), int(header["n_test_obs"])
    size_ok = 4000 <= n_train <= 6000 and 2000 <= n_test <= 3000
    repro = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*"))
             if p.suffix in (".csv", ".svg", ".json", ".txt") and p.name != "manifest.json"}
    out_b = default_benches[1][0]
    bitwise = all((out_b / rel).read_bytes() == data for rel, data in repro.items())
    verdict(9, shape_ok and table_ok and pred_ok and svg_ok and size_ok and bitwise,
            seconds, 600.0,
            f"{n_train} train / {n_test} test obs, 6x4 table {shape_ok and table_ok}, "
            f"240-row CSVs {pred_ok}, SVGs {svg_ok}, bitwise rerun {bitwise}; "
            f"ranking by MSE: {header.get('ranking_by_MSE')}")


def test_criterion_10_determinism(default_benches):
    (a, _, pa), (b, seconds, pb) = default_benches
    assert pa.returncode == 0 and pb.returncode == 0, pb.stderr
    files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    differing = [str(rel) for rel in files if (a / rel).read_bytes() != (b / rel).read_bytes()]
    missing = [str(p.relative_to(b)) for p in b.rglob("*.csv")
               if not (a / p.relative_to(b)).exists()]
    verdict(10, files and not differing and not missing, seconds, 600.0,
            f"{len(files)} CSV artifacts compared, {len(differing)} differ"
            + (f": {differing}" if differing else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
