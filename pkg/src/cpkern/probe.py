"""Randomized search for instances where the contraction premises fail.

Each instance draws a kernel (optionally rank deficient) and one CP map, then
evaluates the quadratic-form premise over random directions plus the worst
direction, the domination ``K_w <= K`` for subunital maps, and the model
contractivity certificate. Violations are recorded as self-contained
scenarios with a ``probe-regression`` task, so ``run`` replays them.
"""

import numpy as np

from .channels import CPMap, cb_norm, is_subunital, iterate_kernel, maps_to_wire
from .kernels import PDKernel, dominates, kolmogorov
from .model import certify, lift, premise_probe
from .randomdyn import MASK64, trial_seed
from .report import REPORT_ID, SCENARIO_ID, sanitize
from .matrix_core import complex_to_wire, op_norm, psd_sqrt

MAP_KINDS = ("unital", "subunital", "diagonal", "any")
PREMISE_SLACK = 1e-9


def _cnormal(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_kernel(rng, n, d, rank_deficient=False):
    nd = n * d
    r = int(rng.integers(1, nd)) if rank_deficient and nd > 1 else nd
    B = _cnormal(rng, (nd, r))
    G = B @ B.conj().T
    G = G / op_norm(G)
    G = 0.5 * (G + G.conj().T)
    return PDKernel.from_gram(tuple(f"x{i}" for i in range(n)), d, G)


def random_map(rng, d, kind="unital", label="s", max_kraus=3):
    """Random Kraus family; ``unital`` rescales so that ``sum A_r^* A_r = I``."""
    r = int(rng.integers(1, max_kraus + 1))
    if kind == "diagonal":
        w = rng.random((r, d)) + 1e-3
        w = w / w.sum(axis=0)
        phases = np.exp(2j * np.pi * rng.random((r, d)))
        kraus = np.array([np.diag(np.sqrt(w[k]) * phases[k]) for k in range(r)])
        return CPMap(label, kraus)
    A = _cnormal(rng, (r, d, d))
    if kind == "any":
        return CPMap(label, A / np.sqrt(r))
    S = np.einsum("rji,rjk->ik", A.conj(), A)
    inv_root = np.linalg.inv(psd_sqrt(S))
    A = np.einsum("rij,jk->rik", A, inv_root)
    if kind == "subunital":
        A = A * np.sqrt(rng.uniform(0.25, 1.0))
    return CPMap(label, A)


def _vector_wire(v):
    return [complex_to_wire(z) for z in v]


def regression_scenario(K, phi, alpha, word, expect, seed, note):
    return {
        "schema": SCENARIO_ID,
        "description": note,
        "seed": int(seed),
        "kernel": K.to_wire(),
        "maps": maps_to_wire({phi.label: phi}),
        "tolerances": {"expect": 0.0},
        "tasks": [{
            "op": "probe-regression",
            "label": phi.label,
            "alpha": _vector_wire(alpha),
            "word": list(word),
            "expect": expect,
        }],
    }


def evaluate(K, phi, rng=None, alphas=8, words=None):
    """Premise, domination and certificate statistics for one instance."""
    words = words or [(phi.label,), (phi.label, phi.label)]
    lhs, rhs, worst = premise_probe(K, phi)
    excess = lhs - rhs
    if rng is not None:
        nd = K.n * K.fiber_dim
        for _ in range(alphas):
            a = _cnormal(rng, nd)
            a = a / np.linalg.norm(a)
            l2, r2, _ = premise_probe(K, phi, a)
            if l2 - r2 > excess:
                lhs, rhs, worst, excess = l2, r2, a, l2 - r2
    sub = is_subunital(phi)
    dom = []
    maps = {phi.label: phi}
    for w in words:
        ok, gap = dominates(K, iterate_kernel(K, w, maps))
        dom.append((w, ok, gap))
    try:
        kf = kolmogorov(K)
        cert = certify({phi.label: lift(kf, phi)}, maps).labels[phi.label]
        cert_row = {
            "admissible": cert.admissible,
            "d_norm": cert.d_norm,
            "cb_value": cert.cb_value,
            "paper_premise_holds": cert.paper_premise_holds,
            "contractive": cert.admissible and cert.d_norm <= 1.0 + 1e-9,
        }
    except Exception as exc:  # noqa: BLE001 - recorded, never raised by a search tool
        cert_row = {"error": getattr(exc, "code", type(exc).__name__)}
    return {
        "premise_lhs": lhs,
        "premise_rhs": rhs,
        "premise_violated": bool(lhs > rhs + PREMISE_SLACK * max(1.0, abs(rhs))),
        "alpha": worst,
        "cb_norm": cb_norm(phi),
        "subunital": sub,
        "domination": dom,
        "certificate": cert_row,
    }


def _violations(K, phi, ev, seed, index):
    out = []
    if ev["premise_violated"]:
        expect = {"premise_lhs": ev["premise_lhs"], "premise_rhs": ev["premise_rhs"], "premise_violated": True}
        word = (phi.label,)
        out.append({
            "instance": index,
            "kind": "premise",
            "lhs": ev["premise_lhs"],
            "rhs": ev["premise_rhs"],
            "scenario": regression_scenario(K, phi, ev["alpha"], word, expect, seed,
                                            "quadratic-form premise violated"),
        })
    if ev["subunital"]:
        for w, ok, gap in ev["domination"]:
            if not ok:
                expect = {"dominated": False, "domination_min_eig": gap}
                out.append({
                    "instance": index,
                    "kind": "domination",
                    "word": list(w),
                    "min_eig": gap,
                    "scenario": regression_scenario(K, phi, ev["alpha"], w, expect, seed,
                                                    "subunital map with K_w not dominated by K"),
                })
                break
    return out


def builtin_cases():
    dph = CPMap("s", np.array([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]))
    return [
        ("rank-one block with dephasing", PDKernel.single(np.ones((2, 2))), dph,
         np.array([1.0, -1.0]) / np.sqrt(2)),
        ("full-rank block with dephasing", PDKernel.single(np.array([[1.0, 0.5], [0.5, 1.0]])), dph, None),
    ]


def run_probe(instances=100, seed=0, dims=(2, 2), rank_deficient=False, map_kind="unital", alphas=8):
    """Run the built-in regressions and ``instances`` random draws; return a report dict."""
    if map_kind not in MAP_KINDS:
        raise ValueError(f"map kind must be one of {MAP_KINDS}")
    n, d = dims
    seed = int(seed) & MASK64
    builtin = []
    violations = []
    for name, K, phi, alpha in builtin_cases():
        ev = evaluate(K, phi)
        if alpha is not None:
            lhs, rhs, _ = premise_probe(K, phi, alpha)
            ev.update(premise_lhs=lhs, premise_rhs=rhs, alpha=alpha,
                      premise_violated=bool(lhs > rhs + PREMISE_SLACK * max(1.0, abs(rhs))))
        found = _violations(K, phi, ev, seed, name)
        violations.extend(found)
        builtin.append({"name": name, **_summary(ev), "violations": len(found)})

    stats = {"instances": instances, "premise_violations": 0, "domination_violations": 0,
             "certified": 0, "inadmissible": 0, "cb_form_failures": 0, "max_d_norm_over_cb": 0.0}
    for i in range(instances):
        rng = np.random.Generator(np.random.PCG64(trial_seed(seed, i)))
        K = random_kernel(rng, n, d, rank_deficient)
        phi = random_map(rng, d, map_kind)
        ev = evaluate(K, phi, rng, alphas)
        found = _violations(K, phi, ev, seed, i)
        violations.extend(found)
        stats["premise_violations"] += any(v["kind"] == "premise" for v in found)
        stats["domination_violations"] += any(v["kind"] == "domination" for v in found)
        c = ev["certificate"]
        if "error" not in c:
            stats["certified"] += bool(c["contractive"])
            stats["inadmissible"] += not c["admissible"]
            stats["cb_form_failures"] += not c["paper_premise_holds"]
            if c["admissible"]:
                stats["max_d_norm_over_cb"] = max(stats["max_d_norm_over_cb"], c["d_norm"] / c["cb_value"])

    report = {
        "schema": REPORT_ID,
        "kind": "probe",
        "seed": seed,
        "config": {"instances": instances, "dims": [n, d], "rank_deficient": rank_deficient,
                   "maps": map_kind, "alphas": alphas},
        "builtin": builtin,
        "stats": stats,
        "violations": violations,
        "exit_code": 0,
    }
    report, bad = sanitize(report)
    report["nonfinite"] = bad
    return report


def _summary(ev):
    return {
        "premise_lhs": ev["premise_lhs"],
        "premise_rhs": ev["premise_rhs"],
        "premise_violated": ev["premise_violated"],
        "subunital": ev["subunital"],
        "dominated": [{"word": list(w), "dominated": ok, "min_eig": gap} for w, ok, gap in ev["domination"]],
        "certificate": ev["certificate"],
    }
