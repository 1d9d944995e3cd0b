#!/usr/bin/env python3
"""Smoke test for the prefcal Python extension.

Builds nothing itself: run `cargo build -p prefcal-python` first (or pass
--release and build in release mode). The script locates the produced
cdylib, exposes it as the importable module `prefcal`, and exercises the
main operations end to end.
"""

import argparse
import math
import shutil
import sys
import tempfile
from pathlib import Path

CHECKS = []


def check(name, condition, detail=""):
    CHECKS.append((name, bool(condition), detail))
    status = "PASS" if condition else "FAIL"
    print(f"{status}: {name}" + (f" ({detail})" if detail else ""))


def import_extension(profile):
    repo_root = Path(__file__).resolve().parent.parent
    cdylib = repo_root / "target" / profile / "libprefcal_py.so"
    if not cdylib.exists():
        sys.exit(
            f"extension not found at {cdylib}; run `cargo build -p prefcal-python` first"
        )
    staging = Path(tempfile.mkdtemp(prefix="prefcal_py_"))
    shutil.copy2(cdylib, staging / "prefcal.so")
    sys.path.insert(0, str(staging))
    import prefcal  # noqa: E402

    return prefcal


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--release", action="store_true", help="use target/release")
    args = parser.parse_args()
    pc = import_extension("release" if args.release else "debug")

    # Rating updates: symmetric draw keeps means, win is antisymmetric.
    prior = pc.Rating(25.0, 8.33)
    a, b = pc.update_pair(prior, prior, "equal")
    check("symmetric draw keeps means", a.mu == 25.0 and b.mu == 25.0 and a.sigma < 8.33)
    a, b = pc.update_pair(prior, prior, "left")
    check(
        "win update is antisymmetric",
        abs((a.mu - 25.0) - (25.0 - b.mu)) == 0.0 and a.mu > 25.0,
    )

    # League rating: a planted order is recovered.
    comparisons = []
    for i in range(6):
        for j in range(6):
            if i != j:
                comparisons.append((f"img{i}", f"img{j}", "left" if i > j else "right"))
    rated = pc.rate_all(comparisons)
    mus = [rated[f"img{i}"].mu for i in range(6)]
    check("league order recovered", mus == sorted(mus), f"mus={['%.1f' % m for m in mus]}")

    # Vote-table parsing with majority aggregation.
    csv_text = "left_id,right_id,category,choice\n" + "\n".join(
        ["x,y,wealthy,left", "x,y,wealthy,left", "x,y,wealthy,right", "p,q,boring,equal"]
    )
    records, rejects = pc.parse_comparisons(csv_text)
    record = next(r for r in records if r["left_id"] == "x")
    check(
        "vote aggregation",
        len(records) == 2
        and not rejects
        and record["vote_count"] == 3
        and record["label"] == "left"
        and abs(record["agreement"] - 2 / 3) < 1e-12,
    )

    # Intensity winner rule.
    label, intensity = pc.determine_winner([6.0, 6.0], [5.0, 5.0], 1.5)
    check("winner rule decides left", label == "left" and intensity == 2.0)
    label, intensity = pc.determine_winner([6.0, 4.0], [5.0, 5.0], 3.0)
    check("winner rule bands equal", label == "equal" and intensity == 2.0)
    check("sigma_i default scales", pc.default_sigma_i(8) == 0.8)

    # Ridge closed form: (sum xy) / (sum x^2 + lambda) = 5/6.
    w = pc.ridge_solve([[1.0], [2.0]], [1.0, 1.0], [1.0, 2.0], 1.0)
    check("ridge matches closed form", abs(w[0] - 5.0 / 6.0) < 1e-12)

    # Kernel weights and local R^2.
    kw = pc.kernel_weights([0.0, 1.0], 1.0)
    check("kernel weights", kw[0] == 1.0 and abs(kw[1] - math.e) < 1e-12)
    r2 = pc.local_r2([[1.0], [2.0], [3.0]], [1.0, 1.0, 1.0], [2.0, 4.0, 6.0], [2.0])
    check("perfect fit has R^2 = 1", abs(r2 - 1.0) < 1e-12)
    check(
        "degenerate R^2 is None",
        pc.local_r2([[1.0], [2.0]], [1.0, 1.0], [3.0, 3.0], [0.0]) is None,
    )

    # PCA: rank-deficient data reconstructs its top component variance.
    data = [[float(i), 2.0 * i, 0.0] for i in range(10)]
    projected = pc.pca_fit_transform(data, 1)
    spread = max(p[0] for p in projected) - min(p[0] for p in projected)
    check("pca captures the planted direction", spread > 10.0)

    # Dimension-response parsing with a fenced reply.
    reply = (
        "Sure!\n```json\n{\"dimensions\": ["
        + ",".join(
            '{"name": "D%d", "description": "d", "high_indicator": "h", '
            '"low_indicator": "l"}' % i
            for i in range(5)
        )
        + "]}\n```"
    )
    dims = pc.parse_dimension_response(reply, "wealthy")
    check("dimension reply parses", len(dims) == 5 and dims[0]["name"] == "D0")

    # Manifold calibration with exact mirror symmetry.
    import random

    rng = random.Random(42)
    reference = []
    for i in range(12):
        clip_a = [rng.uniform(-1, 1) for _ in range(16)]
        clip_b = [rng.uniform(-1, 1) for _ in range(16)]
        sem_a = [rng.uniform(1, 10) for _ in range(4)]
        sem_b = [rng.uniform(1, 10) for _ in range(4)]
        margin = sum(sem_a) - sum(sem_b)
        label = "left" if margin > 0 else "right"
        reference.append(
            (f"a{i}", f"b{i}", clip_a, clip_b, sem_a, sem_b, margin, 0.0, label)
        )
    manifold = pc.Manifold(reference, k=6)
    check("manifold doubles reference", len(manifold) == 24)
    clip_a = [rng.uniform(-1, 1) for _ in range(16)]
    clip_b = [rng.uniform(-1, 1) for _ in range(16)]
    sem_a = [rng.uniform(1, 10) for _ in range(4)]
    sem_b = [rng.uniform(1, 10) for _ in range(4)]
    forward = manifold.calibrate("q1", "q2", clip_a, clip_b, sem_a, sem_b)
    backward = manifold.calibrate("q2", "q1", clip_b, clip_a, sem_b, sem_a)
    check(
        "mirror symmetry is exact",
        forward["delta_hat"] == -backward["delta_hat"],
        f"delta={forward['delta_hat']:.6f}",
    )

    # Metrics.
    check(
        "kappa of inverted lists is -1",
        abs(pc.cohens_kappa(["right", "right", "left", "left"],
                            ["left", "left", "right", "right"]) + 1.0) < 1e-12,
    )
    check(
        "excl-equal accuracy",
        abs(pc.accuracy(["left", "left", "equal"], ["left", "right", "equal"],
                        exclude_equal=True) - 0.5) < 1e-12,
    )
    check(
        "macro F1",
        abs(pc.macro_f1(["left", "right", "left", "right"],
                        ["left", "left", "right", "right"]) - 0.5) < 1e-12,
    )
    power = pc.dimension_power(
        [([7.0], [3.0]), ([2.0], [6.0])], ["left", "right"], ["d"]
    )
    check("dimension power", power["d"] == 1.0)

    # Search temperature schedule endpoints.
    check(
        "schedule endpoints",
        pc.search_temperature(0) == ("explore", 0.85)
        and pc.search_temperature(5) == ("explore", 1.0)
        and pc.search_temperature(6) == ("converge", 0.7)
        and pc.search_temperature(14) == ("converge", 0.5),
    )

    failed = [name for name, ok, _ in CHECKS if not ok]
    print(f"\n{len(CHECKS) - len(failed)}/{len(CHECKS)} checks passed")
    if failed:
        sys.exit(f"FAILED: {', '.join(failed)}")


if __name__ == "__main__":
    main()
