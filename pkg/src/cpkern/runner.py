"""Scenario execution: load, validate, dispatch tasks, build the report."""

import os
import time
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import _backend
from .asymptotics import (
    DEFAULT_CONV_TOL, DEFAULT_MAX_ITER, MONOTONE_SLACK, d_inf_bounds, decay_bound_check,
    harmonic_check, limit_consistency, limit_kernel, stein,
)
from .channels import cb_norm, is_subunital, iterate_kernel, maps_from_wire
from .errors import CheckFailedError, CPKernError, ValidationError
from .kernels import PDKernel, dominates, gram, kolmogorov, validate
from .matrix_core import (
    DEFAULT_PSD_TOL, DEFAULT_RANK_TOL, RESIDUAL_TOL, matrix_to_wire, op_norm, psd_check,
    vector_from_wire,
)
from .model import CERT_TOL, certify, compressed_gram, lift_all, model_norm, premise_probe, realize_blocks
from .randomdyn import IIDModel, PathSample, growth_check, lyapunov_estimate, sample_path, uniform_bound_check
from .report import REPORT_ID, check_expectations, load_schema, sanitize, write_csv
from .rn import cross_model, rn_derivative, rn_iterated

EXIT_OK, EXIT_VALIDATION, EXIT_TASK, EXIT_ASSERT = 0, 2, 3, 4

DEFAULT_TOLS = {
    "psd": DEFAULT_PSD_TOL,
    "rank": DEFAULT_RANK_TOL,
    "cert": CERT_TOL,
    "adm": None,
    "conv": DEFAULT_CONV_TOL,
    "expect": 1e-8,
}


def kernel_wire(K):
    return [[matrix_to_wire(B) for B in row] for row in K.blocks]


@dataclass
class Context:
    kernels: dict
    maps: dict
    seed: int
    tols: dict
    workers: int = 1
    _factors: dict = field(default_factory=dict)
    _lifts: dict = field(default_factory=dict)

    def factor(self, which="kernel"):
        if which not in self._factors:
            self._factors[which] = kolmogorov(self.kernels[which], self.tols["rank"], self.tols["psd"])
        return self._factors[which]

    def lifts(self, which="kernel"):
        if which not in self._lifts:
            self._lifts[which] = lift_all(self.factor(which), self.maps, self.tols["adm"])
        return self._lifts[which]


def _require(cond, message):
    if not cond:
        raise CheckFailedError(message)


def _scale(K):
    return max(1.0, op_norm(gram(K)))


def _single_label(task, ctx):
    if "label" in task:
        return task["label"]
    if len(ctx.maps) == 1:
        return next(iter(ctx.maps))
    raise ValidationError("task needs 'label' when several maps are declared")


def task_validate(task, ctx, series):
    r = validate(ctx.kernels[task.get("kernel", "kernel")], ctx.tols["psd"])
    return {
        "hermitian_residual": r.hermitian_residual,
        "min_eig": r.min_eig,
        "psd": r.psd,
        "cauchy_schwarz_ok": r.cauchy_schwarz_ok,
        "cauchy_schwarz_excess": r.cauchy_schwarz_excess,
        "passed": r.passed,
        "error": r.error,
    }


def task_kolmogorov(task, ctx, series):
    which = task.get("kernel", "kernel")
    kf = ctx.factor(which)
    G = gram(ctx.kernels[which])
    return {
        "rank": kf.rank,
        "n": kf.source_dims[0],
        "fiber_dim": kf.source_dims[1],
        "rank_tol": kf.rank_tol_used,
        "reconstruction_residual": op_norm(kf.W.conj().T @ kf.W - G),
    }


def task_iterate(task, ctx, series):
    K = ctx.kernels["kernel"]
    w = tuple(task.get("word", []))
    direct = iterate_kernel(K, w, ctx.maps)
    psd_ok, min_eig = psd_check(gram(direct), 1e-8)
    _require(psd_ok, f"iterated kernel is not PSD (min eig {min_eig:.3e})")
    bound = decay_bound_check(K, ctx.maps, w)
    _require(bound.passed, f"decay bound violated by {bound.max_excess:.3e}")
    out = {
        "word": list(w),
        "blocks": kernel_wire(direct),
        "psd": psd_ok,
        "min_eig": min_eig,
        "decay_bound": {"passed": bound.passed, "constant": bound.bound_constant, "max_excess": bound.max_excess},
    }
    kf = ctx.factor()
    lifts = ctx.lifts()
    if all(lifts[s].admissible for s in set(w)):
        a = compressed_gram(lifts, w).a_w
        resid = op_norm(gram(direct) - gram(K.with_blocks(realize_blocks(kf, a))))
        _require(resid <= RESIDUAL_TOL * _scale(K), f"compressed realization off by {resid:.3e}")
        out.update(route="compressed", a_w=matrix_to_wire(a), model_norm=model_norm(lifts, w),
                   oracle_residual=resid)
    else:
        out.update(route="direct", a_w=None, model_norm=None, oracle_residual=None)
    return out


def task_certify(task, ctx, series):
    labels = task.get("labels", list(ctx.maps))
    lifts = ctx.lifts()
    return certify({s: lifts[s] for s in labels}, ctx.maps, ctx.tols["cert"]).to_dict()


def task_limit(task, ctx, series):
    s = _single_label(task, ctx)
    K = ctx.kernels["kernel"]
    res = limit_kernel(ctx.lifts()[s], ctx.factor(), ctx.tols["conv"],
                       task.get("max_iter", DEFAULT_MAX_ITER), ctx.tols["cert"])
    lo, hi = d_inf_bounds(res)
    harm = harmonic_check(res.kbar, ctx.maps[s])
    consistency = limit_consistency(res, K, ctx.maps[s])
    _require(res.monotone_min_eig >= -MONOTONE_SLACK, "D_n is not monotone nonincreasing")
    _require(lo >= -1e-9 and hi <= 1 + 1e-9, f"d_inf eigenvalues [{lo:.3e}, {hi:.3e}] leave [0, 1]")
    _require(harm <= 1e-8, f"limit kernel is not harmonic (residual {harm:.3e})")
    if series is not None:
        series("limit", ["n", "step_residual", "op_norm_D", "projection_defect"], res.series_rows())
    return {
        "label": s,
        "d_inf": matrix_to_wire(res.d_inf),
        "kbar": kernel_wire(res.kbar),
        "iterations": res.iterations,
        "step_residual": res.step_residual,
        "projection_defect": res.projection_defect,
        "projection_ok": res.projection_defect <= 1e-6,
        "monotone_min_eig": res.monotone_min_eig,
        "d_inf_min_eig": lo,
        "d_inf_max_eig": hi,
        "harmonic_residual": harm,
        "limit_consistency": consistency,
    }


def task_stein(task, ctx, series):
    s = _single_label(task, ctx)
    K = ctx.kernels["kernel"]
    res = stein(K, ctx.maps[s], task.get("n_max", 30), tol=ctx.tols["cert"], conv_tol=ctx.tols["conv"])
    tele = float(res.telescoping_residuals.max())
    _require(tele <= 1e-10, f"telescoping identity off by {tele:.3e}")
    if res.certified:
        res.assert_certified()
    if series is not None:
        gaps = res.limit_gaps if res.limit_gaps is not None else [float("nan")] * len(res.partial_sums)
        rows = [(N + 1, t, g, int(p)) for N, (t, g, p) in
                enumerate(zip(res.telescoping_residuals, gaps, res.increments_psd))]
        series("stein", ["N", "telescoping_residual", "limit_gap", "increment_psd"], rows)
    return {
        "label": s,
        "q_kernel": [[matrix_to_wire(B) for B in row] for row in res.q_kernel],
        "q_valid": res.q_valid,
        "certified": res.certified,
        "increments_psd": res.increments_psd,
        "telescoping_max": tele,
        "partial_sum_final": kernel_wire(K.with_blocks(res.partial_sums[-1])),
        "limit_gap_final": None if res.limit_gaps is None else float(res.limit_gaps[-1]),
        "kbar": None if res.kbar is None else kernel_wire(res.kbar),
    }


def _need_kernel2(ctx):
    if "kernel2" not in ctx.kernels:
        raise ValidationError("task needs 'kernel2'")
    return ctx.kernels["kernel2"]


def task_rn(task, ctx, series):
    L = _need_kernel2(ctx)
    return rn_derivative(ctx.factor(), L, ctx.tols["psd"]).to_dict(dominated=True)


def task_rn_iterated(task, ctx, series):
    w = tuple(task.get("word", []))
    res = rn_iterated(ctx.lifts(), ctx.factor(), w, ctx.maps, ctx.tols["cert"])
    K = ctx.kernels["kernel"]
    return res.to_dict(word=w, dominated=dominates(K, iterate_kernel(K, w, ctx.maps), ctx.tols["cert"])[0])


def task_cross_model(task, ctx, series):
    K1 = _need_kernel2(ctx)
    w = tuple(task.get("word", []))
    out = cross_model(K1, ctx.kernels["kernel"], ctx.factor(), ctx.lifts(), w, ctx.maps, ctx.tols["psd"])
    return {"word": list(w), "blocks": kernel_wire(out)}


def _iid(task, ctx):
    probs = task.get("probs") or {s: 1.0 / len(ctx.maps) for s in ctx.maps}
    return IIDModel.from_mapping(probs)


def task_lyapunov(task, ctx, series):
    model = _iid(task, ctx)
    est = lyapunov_estimate(model, ctx.lifts(), task.get("n", 1000), task.get("trials", 20),
                            task.get("seed", ctx.seed), renorm=task.get("renorm", True),
                            order=task.get("order", "reversed"), workers=ctx.workers)
    if not est.neg_inf:
        _require(est.lambda_hat <= est.lambda_upper + 1e-9,
                 f"lambda_hat {est.lambda_hat:.6g} exceeds the model bound {est.lambda_upper:.6g}")
        _require(est.lambda_inf_hat <= est.lambda_hat + 1e-12, "inf-formula track exceeds lambda_hat")
    if series is not None:
        ks = np.arange(1, est.n + 1)
        rows = [(t, int(k), x, x / k) for t in range(est.trials) for k, x in zip(ks, est.series[t])]
        series("lyapunov", ["trial", "k", "X_k", "X_k_over_k"], rows)
    out = est.summary()
    out["per_trial_Xn"] = est.per_trial_Xn
    return out


def _path(task, ctx):
    if "word" in task:
        return PathSample(task.get("seed", ctx.seed), tuple(task["word"]))
    return sample_path(_iid(task, ctx), task.get("n", 20), task.get("seed", ctx.seed))


def task_growth_check(task, ctx, series):
    K = ctx.kernels["kernel"]
    path = _path(task, ctx)
    x = task.get("x", K.points[0])
    y = task.get("y", x)
    d = K.fiber_dim
    a = vector_from_wire(task["a"]) if "a" in task else np.eye(d)[0]
    b = vector_from_wire(task["b"]) if "b" in task else a
    gr = growth_check(ctx.factor(), ctx.lifts(), K, path, x, a, y, b, maps=ctx.maps)
    ub = uniform_bound_check(K, ctx.maps, path)
    _require(gr.passed, "scalar growth bound violated")
    _require(ub.passed, "uniform cb bound violated")
    return {
        "path": list(path.labels_drawn),
        "passed": gr.passed,
        "lhs": [r.lhs for r in gr.rows],
        "rhs": [r.rhs for r in gr.rows],
        "rate": [r.rate for r in gr.rows],
        "model_rate": [r.model_rate for r in gr.rows],
        "uniform_bound": {"passed": ub.passed, "L": ub.L, "decay_guaranteed": ub.decay_guaranteed},
    }


def task_probe_regression(task, ctx, series):
    s = _single_label(task, ctx)
    K = ctx.kernels["kernel"]
    phi = ctx.maps[s]
    alpha = vector_from_wire(task["alpha"]) if "alpha" in task else None
    lhs, rhs, alpha = premise_probe(K, phi, alpha)
    w = tuple(task.get("word", [s]))
    Kw = iterate_kernel(K, w, ctx.maps)
    dom, dom_min = dominates(K, Kw, ctx.tols["psd"])
    out = {
        "label": s,
        "word": list(w),
        "alpha": alpha,
        "premise_lhs": lhs,
        "premise_rhs": rhs,
        "premise_violated": bool(lhs > rhs + 1e-9 * max(1.0, abs(rhs))),
        "cb_norm": cb_norm(phi),
        "subunital": is_subunital(phi),
        "dominated": dom,
        "domination_min_eig": dom_min,
    }
    try:
        lf = ctx.lifts()[s]
        c = certify({s: lf}, ctx.maps, ctx.tols["cert"])
        out["certificate"] = c.to_dict()
    except CPKernError as exc:
        out["certificate"] = {"error": exc.code}
    return out


TASKS = {
    "validate": task_validate,
    "kolmogorov": task_kolmogorov,
    "iterate": task_iterate,
    "certify": task_certify,
    "limit": task_limit,
    "stein": task_stein,
    "rn": task_rn,
    "rn_iterated": task_rn_iterated,
    "cross_model": task_cross_model,
    "lyapunov": task_lyapunov,
    "growth_check": task_growth_check,
    "probe-regression": task_probe_regression,
}


def _check_references(scn, kernels, maps):
    """Label, point and dimension references that the schema cannot express."""
    K = kernels["kernel"]
    for i, task in enumerate(scn["tasks"]):
        where = f"tasks[{i}] ({task['op']})"
        labels = list(task.get("word", [])) + list(task.get("labels", [])) + list(task.get("probs", {}))
        if "label" in task:
            labels.append(task["label"])
        for s in labels:
            if s not in maps:
                raise ValidationError(f"{where}: unknown label {s!r}")
        for key in ("x", "y"):
            if key in task and task[key] not in K.points:
                raise ValidationError(f"{where}: unknown point {task[key]!r}")
        for key in ("a", "b"):
            if key in task and len(task[key]) != K.fiber_dim:
                raise ValidationError(f"{where}: vector '{key}' must have length {K.fiber_dim}")
        if "alpha" in task and len(task["alpha"]) != K.n * K.fiber_dim:
            raise ValidationError(f"{where}: alpha must have length {K.n * K.fiber_dim}")
        if task["op"] in ("rn", "cross_model") or task.get("kernel") == "kernel2":
            if "kernel2" not in kernels:
                raise ValidationError(f"{where}: scenario declares no kernel2")
    for s, phi in maps.items():
        if phi.dim != K.fiber_dim:
            raise ValidationError(f"map {s!r} acts on C^{phi.dim}, kernel fiber is C^{K.fiber_dim}")
    if "kernel2" in kernels:
        K2 = kernels["kernel2"]
        if K2.points != K.points or K2.fiber_dim != K.fiber_dim:
            raise ValidationError("kernel2 must share points and fiber_dim with kernel")


def load_scenario(obj, tol_overrides=None):
    """Validate a scenario document and build its execution context.

    Raises
    ------
    ValidationError
        Schema violations, malformed matrices and dangling references.
    """
    try:
        jsonschema.validate(obj, load_schema("scenario"))
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "$"
        raise ValidationError(f"schema error at {loc}: {exc.message}") from None
    try:
        kernels = {k: PDKernel.from_wire(obj[k]) for k in ("kernel", "kernel2") if k in obj}
        maps = maps_from_wire(obj["maps"])
    except ValidationError:
        raise
    except (CPKernError, ValueError, TypeError) as exc:
        raise ValidationError(f"malformed input: {exc}") from None
    _check_references(obj, kernels, maps)
    tols = dict(DEFAULT_TOLS)
    tols.update(obj.get("tolerances", {}))
    for key, value in (tol_overrides or {}).items():
        if key not in DEFAULT_TOLS:
            raise ValidationError(f"unknown tolerance {key!r}")
        tols[key] = float(value)
    return Context(kernels, maps, int(obj.get("seed", 0)), tols)


def _error_record(exc):
    rec = {"code": exc.code, "message": str(exc)}
    if getattr(exc, "details", None):
        rec["details"] = sanitize(exc.details)[0]
    return rec


def _series_writer(series_dir, index):
    def emit(kind, header, rows):
        os.makedirs(series_dir, exist_ok=True)
        write_csv(os.path.join(series_dir, f"task{index:02d}_{kind}.csv"), header, rows)
    return emit


def run_tasks(obj, ctx, series_dir=None, timing=False):
    """Execute the scenario tasks in order and return ``(report, exit_code)``."""
    records = []
    times = {}
    t_start = time.perf_counter()
    for i, task in enumerate(obj["tasks"]):
        op = task["op"]
        rec = {"index": i, "op": op}
        if "id" in task:
            rec["id"] = task["id"]
        series = None
        if series_dir is not None and task.get("series", True):
            series = _series_writer(series_dir, i)
        t0 = time.perf_counter()
        want_err = task.get("expect_error")
        try:
            result = TASKS[op](task, ctx, series)
        except CPKernError as exc:
            if want_err == exc.code:
                rec.update(status="ok", result={"error_code": exc.code, **_error_record(exc)})
            elif isinstance(exc, CheckFailedError):
                rec.update(status="failed", error=_error_record(exc))
            else:
                rec.update(status="error", error=_error_record(exc))
        else:
            result = sanitize(result)[0]
            if want_err is not None:
                rec.update(status="failed", result=result,
                           error={"code": CheckFailedError.code, "message": f"expected {want_err}, task succeeded"})
            else:
                rec.update(status="ok", result=result)
        if "expect" in task and rec["status"] == "ok":
            checks = check_expectations(rec["result"], task["expect"], task.get("expect_tol", ctx.tols["expect"]))
            rec["checks"] = checks
            bad = [c["field"] for c in checks if not c["ok"]]
            if bad:
                rec.update(status="failed", error={"code": CheckFailedError.code,
                                                   "message": "expectation mismatch: " + ", ".join(bad)})
        times[f"task{i:02d}"] = time.perf_counter() - t0
        records.append(rec)

    try:
        lifts = ctx.lifts()
        certificate = certify(lifts, ctx.maps, ctx.tols["cert"]).to_dict()
    except CPKernError:
        certificate = None

    statuses = {r["status"] for r in records}
    code = EXIT_TASK if "error" in statuses else EXIT_ASSERT if "failed" in statuses else EXIT_OK
    report = {
        "schema": REPORT_ID,
        "kind": "run",
        "seed": ctx.seed,
        "tasks": records,
        "certificate": certificate,
        "exit_code": code,
        "backend": _backend.NAME,
    }
    if timing:
        times["total"] = time.perf_counter() - t_start
        report["timing"] = times
    report, bad = sanitize(report)
    report["nonfinite"] = bad
    return report, code


def validation_report(message, seed=None):
    return {
        "schema": REPORT_ID,
        "kind": "run",
        "seed": seed,
        "tasks": [],
        "error": {"code": ValidationError.code, "message": message},
        "exit_code": EXIT_VALIDATION,
        "nonfinite": [],
    }

