"""Writes the bundled tiny fixture: a dataset, a classifier checkpoint, a
baseline config and the golden evaluation reports computed with numpy."""

import pathlib

import numpy as np

HERE = pathlib.Path(__file__).resolve().parent
rng = np.random.default_rng(20240601)

# Dataset: 3 features, 48 train and 24 test rows, both groups in each split.
n_train, n_test, dim = 48, 24, 3
n = n_train + n_test
a = np.tile([0, 1], n // 2)
g = rng.integers(0, 2, n)
y = rng.integers(0, 2, n)
x = rng.normal(size=(n, dim)) + np.outer(2 * y - 1, [1.0, 0.5, 0.0]) + np.outer(a, [0.0, 0.0, 1.0])
x = np.round(x, 6)
split = ["train"] * n_train + ["test"] * n_test

with open(HERE / "tiny.csv", "w") as f:
    f.write("f0,f1,f2,a,g,y,split\n")
    for i in range(n):
        f.write(",".join(repr(float(v)) for v in x[i]) + f",{a[i]},{g[i]},{y[i]},{split[i]}\n")

# Checkpoint: 3 -> 4 -> 1 with rectifier, weights on a coarse grid.
w0 = np.round(rng.uniform(-1, 1, (dim, 4)), 3)
b0 = np.round(rng.uniform(-0.5, 0.5, (1, 4)), 3)
w1 = np.round(rng.uniform(-1, 1, (4, 1)), 3)
b1 = np.round(rng.uniform(-0.5, 0.5, (1, 1)), 3)


def matrix_lines(m):
    out = [f"matrix {m.shape[0]} {m.shape[1]}"]
    out += [" ".join(repr(float(v)) for v in row) for row in m]
    return out


lines = ["fairlab-checkpoint 1", "model mlp", "mlp classifier", "output sigmoid", "layers 3 4 1"]
for m in (w0, b0, w1, b1):
    lines += matrix_lines(m)
lines.append("end")
(HERE / "tiny_checkpoint.txt").write_text("\n".join(lines) + "\n")

(HERE / "tiny_baseline.cfg").write_text(
    "version = 1\nmodel = mlp\nhidden = 8\nobjective = baseline\nepochs = 20\nbatch_size = 16\n"
    "learning_rate = 0.1\nmomentum = 0.9\nweight_decay = 0\nseed = 1\n")
(HERE / "tiny_alpha0.cfg").write_text(
    "version = 1\nmodel = mlp\nhidden = 8\nobjective = equal_loss\nalpha = 0\nepochs = 20\nbatch_size = 16\n"
    "learning_rate = 0.1\nmomentum = 0.9\nweight_decay = 0\nseed = 1\n")


def auc(s, lab):
    pos, neg = s[lab == 1], s[lab == 0]
    wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


for name, rows in (("train", slice(0, n_train)), ("test", slice(n_train, n))):
    xs, ys, as_ = x[rows], y[rows], a[rows]
    z = (np.maximum(xs @ w0 + b0, 0) @ w1 + b1)[:, 0]
    p = 1 / (1 + np.exp(-z))
    loss = -(ys * np.log(p) + (1 - ys) * np.log(1 - p))
    acc = ((p >= 0.5).astype(int) == ys).astype(float)
    out = ["split,metric,group0,group1,gap,abs_gap,overall"]
    for metric, f in (("loss", lambda m: loss[m].mean()), ("accuracy", lambda m: acc[m].mean()),
                      ("auc", lambda m: auc(p[m], ys[m]))):
        v0, v1, vall = (float(f(m)) for m in (as_ == 0, as_ == 1, np.ones_like(as_, dtype=bool)))
        out.append(f"{name},{metric},{v0!r},{v1!r},{v0 - v1!r},{abs(v0 - v1)!r},{vall!r}")
    (HERE / f"golden_report_{name}.csv").write_text("\n".join(out) + "\n")
