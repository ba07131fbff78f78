"""Batch experiment runner.

Reads a JSON experiment spec, executes one computation kind or a full
theorem-verification pipeline, and writes CSV/JSON artifacts next to a
plain-text summary.  Runs are deterministic for a fixed spec and seed, and
artifact bytes are reproducible because nothing in them depends on wall
clock or environment.

Output directory precedence: the --out flag, then the STURMKIT_OUT
environment variable, then the spec's output_dir field.  The --threads flag
is validated and recorded in the summary; execution is serial, the flag
only bounds planned sweep fan-out.
"""

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__, analytic, harmonics, inverse, pdesim, slcore
from .slcore import PotentialField, dirichlet_eigs

SPEC_SCHEMA = "sturmkit/experiment/1"
BUILD_ID = f"artifact-{__version__}"
DEFAULT_OUT = "sturmkit-out"
OUT_ENV_VAR = "STURMKIT_OUT"

KINDS = (
    "eigs",
    "zeros",
    "reconstruct",
    "wave-trace",
    "schrod-trace",
    "windows",
    "interp",
    "theorem1-pipeline",
    "theorem2-pipeline",
    "theorem4-pipeline",
)

REQUIRED_KEYS = {
    "eigs": ("potential", "K"),
    "zeros": ("V1", "V2", "x0", "radii"),
    "reconstruct": ("V_true", "epsilon", "S"),
    "wave-trace": ("V", "f", "T", "K"),
    "schrod-trace": ("V", "f", "F", "delta", "T", "K"),
    "windows": ("family", "V1", "V2", "m", "K_trunc"),
    "interp": ("V", "P", "epsilon"),
    "theorem1-pipeline": (),
    "theorem2-pipeline": (),
    "theorem4-pipeline": (),
}

COMMAND_KINDS = {
    "eigs": ("eigs",),
    "zeros": ("zeros",),
    "reconstruct": ("reconstruct",),
    "trace": ("wave-trace", "schrod-trace"),
    "windows": ("windows",),
    "interp": ("interp",),
    "pipeline": ("theorem1-pipeline", "theorem2-pipeline", "theorem4-pipeline"),
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = ""


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str


def validate_doc(doc):
    """Schema diagnostics for a parsed spec document.  No computation."""
    diags = []
    if not isinstance(doc, dict):
        return ["spec must be a JSON object"]
    if doc.get("schema") != SPEC_SCHEMA:
        diags.append(f"schema: expected {SPEC_SCHEMA!r}, got {doc.get('schema')!r}")
    kind = doc.get("kind")
    if kind not in KINDS:
        diags.append(f"kind: unknown kind {kind!r}")
        return diags
    params = doc.get("parameters", {})
    if not isinstance(params, dict):
        diags.append("parameters: must be an object")
        return diags
    for key in REQUIRED_KEYS[kind]:
        if key not in params:
            diags.append(f"{kind}: missing required key {key!r}")
    if kind == "windows" and "family" in params:
        fam = params["family"]
        if fam not in ("cos", "exp"):
            diags.append(f"windows: family must be 'cos' or 'exp', got {fam!r}")
        elif fam == "cos" and "T" not in params:
            diags.append("windows: cos family needs key 'T'")
        elif fam == "exp" and "delta" not in params:
            diags.append("windows: exp family needs key 'delta'")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        diags.append("seed: must be a nonnegative integer")
    out = doc.get("output_dir", "")
    if not isinstance(out, str):
        diags.append("output_dir: must be a string")
    return diags


def load_spec(path):
    """Parse and validate a spec file; raises ValueError with diagnostics."""
    with open(path) as fh:
        doc = json.load(fh)
    diags = validate_doc(doc)
    if diags:
        raise ValueError("; ".join(diags))
    return ExperimentSpec(kind=doc["kind"], parameters=doc.get("parameters", {}),
                          seed=doc.get("seed", 0),
                          output_dir=doc.get("output_dir", ""))


# ---------------------------------------------------------------------------
# parameter sub-specs


def _potential(p):
    """Build a PotentialField from its JSON description."""
    kind = p.get("kind")
    n = int(p.get("n", 4096))
    x = np.linspace(0.0, 1.0, n + 1)
    if kind == "zero":
        return PotentialField.zero(n)
    if kind == "constant":
        return PotentialField.constant(float(p["value"]), n)
    if kind == "gaussian":
        a, c, w = float(p["amplitude"]), float(p["center"]), float(p["width"])
        vals = a * np.exp(-w * (x - c) ** 2)
        cut = p.get("support_cut")
        if cut is not None:
            vals = vals * (x <= float(cut))
        return PotentialField(vals)
    if kind == "step":
        return PotentialField(np.where(x < float(p["cut"]), float(p["value"]), 0.0),
                              interp_rule="piecewise-constant")
    if kind == "samples":
        return PotentialField(np.asarray(p["values"], dtype=np.float64),
                              interp_rule=p.get("interp_rule", "piecewise-linear"))
    raise ValueError(f"unknown potential kind {kind!r}")


def _field_fn(p):
    """Build an endpoint-respecting field function from its description."""
    kind = p.get("kind")
    if kind == "zero":
        return lambda x: 0.0 * np.asarray(x)
    if kind == "sine":
        k = int(p.get("k", 1))
        a = float(p.get("amplitude", 1.0))
        return lambda x: a * np.sin(k * math.pi * np.asarray(x))
    if kind == "sine-sum":
        coeffs = np.asarray(p["coeffs"], dtype=np.float64)
        def f(x):
            x = np.asarray(x)
            return sum(c * np.sin((j + 1) * math.pi * x)
                       for j, c in enumerate(coeffs))
        return f
    if kind == "poly":
        pe, qe = int(p.get("p", 2)), int(p.get("q", 2))
        return lambda x: np.asarray(x) ** pe * (1.0 - np.asarray(x)) ** qe
    raise ValueError(f"unknown field kind {kind!r}")


def _index_list(p):
    if isinstance(p, dict):
        return list(range(1, int(p["first"]) + 1))
    return [int(k) for k in p]


# ---------------------------------------------------------------------------
# artifact helpers


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) for v in row])


def _rel_l2(V_a, V_b):
    x = np.linspace(0.0, 1.0, 4097)
    num = np.sqrt(np.trapezoid((V_a(x) - V_b(x)) ** 2, x))
    den = np.sqrt(np.trapezoid(V_b(x) ** 2, x))
    return float(num / den) if den > 0 else float(num)


# ---------------------------------------------------------------------------
# kind handlers: each returns (artifact names, checks, summary lines)


def _run_eigs(params, out, rng):
    V = _potential(params["potential"])
    K = int(params["K"])
    pairs = dirichlet_eigs(V, K, n_steps=params.get("n_steps"))
    _write_csv(os.path.join(out, "eigs.csv"),
               ["k", "lambda", "dphi_at_1", "norm_sq"],
               [(p.k, p.lam, p.dphi_at_1, p.norm_sq) for p in pairs])
    lams = np.array([p.lam for p in pairs])
    checks = [CheckOutcome("spectrum-monotone", bool(np.all(np.diff(lams) > 0)),
                           f"{K} eigenvalues strictly increasing")]
    lines = [f"lambda_1 = {lams[0]:.6g}, lambda_K = {lams[-1]:.6g}"]
    if K >= 2:
        wit = slcore.verify_asymptotics(V, K)
        checks.append(CheckOutcome("asymptotic-witness-finite", math.isfinite(wit),
                                   f"sup k|sqrt(lambda_k) - k pi| = {wit:.6g}"))
    return ["eigs.csv"], checks, lines


def _run_zeros(params, out, rng):
    V1, V2 = _potential(params["V1"]), _potential(params["V2"])
    x0 = float(params["x0"])
    F = analytic.build_F(V1, V2, x0)
    prof = analytic.density_profile(F, [float(r) for r in params["radii"]])
    analytic.density_to_csv(prof, os.path.join(out, "density.csv"))
    bound = x0 / math.pi + 0.02
    checks = [CheckOutcome("plateau-bound", prof.plateau <= bound,
                           f"plateau {prof.plateau:.6g} vs bound {bound:.6g}")]
    lines = [f"rows: {len(prof.rows)}, largest radius {prof.rows[-1].radius:.6g}"]
    return ["density.csv"], checks, lines


def _run_reconstruct(params, out, rng):
    V_true = _potential(params["V_true"])
    eps = float(params["epsilon"])
    S = inverse.IndexSet(tuple(_index_list(params["S"])))
    K_max = int(params.get("K_max", S.indices[-1]))
    data = inverse.forward_data(V_true, S, K_max, n_steps=params.get("data_n_steps"))
    tail_n = int(params.get("tail_n", 257))
    tail_x = np.linspace(1.0 - eps, 1.0, tail_n)
    weights = params.get("weights")
    if isinstance(weights, dict):
        dw = float(weights["derivative_weight"])
        weights = np.concatenate([np.ones(len(data)), dw * np.ones(len(data))])
    elif weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
    problem = inverse.ReconstructionProblem(
        data=data, known_tail=tuple(V_true(tail_x)), epsilon=eps,
        weights=weights, tikhonov=params.get("tikhonov"))
    init = _potential(params.get("init", {"kind": "zero"}))
    report = inverse.reconstruct(problem, init,
                                 max_iter=int(params.get("max_iter", 40)))
    inverse.report_to_json(report, os.path.join(out, "report.json"))
    x = np.linspace(0.0, 1.0, 4097)
    _write_csv(os.path.join(out, "model.csv"), ["x", "v_hat", "v_true"],
               np.column_stack([x, report.V_hat(x), V_true(x)]))
    err = _rel_l2(report.V_hat, V_true)
    bound = float(params.get("error_bound", 0.05))
    checks = [CheckOutcome("recovery-error", err <= bound,
                           f"relative L2 error {err:.6g} vs bound {bound:.6g}")]
    lines = [f"status {report.status} after {report.iterations} iterations, "
             f"misfit {report.data_misfit:.6g}"]
    return ["report.json", "model.csv"], checks, lines


def _run_wave_trace(params, out, rng):
    cfg = pdesim.WaveConfig(V=_potential(params["V"]), f=_field_fn(params["f"]),
                            T=float(params["T"]), K=int(params["K"]))
    tr = pdesim.wave_trace(cfg, n_t=int(params.get("n_t", pdesim.DEFAULT_TIME_STEPS)))
    pdesim.trace_to_csv(tr, os.path.join(out, "trace.csv"))
    pdesim.wave_config_to_json(cfg, os.path.join(out, "config.json"))
    checks = [CheckOutcome("mode-budget-clean", len(tr.notes) == 0,
                           "; ".join(tr.notes) or "no truncation warnings")]
    lines = [f"horizon hypothesis met: {cfg.time_hypothesis_met}",
             f"max |left trace| = {float(np.max(np.abs(tr.left))):.6g}"]
    return ["trace.csv", "config.json"], checks, lines


def _run_schrod_trace(params, out, rng):
    cfg = pdesim.SchrodingerConfig(
        V=_potential(params["V"]), f=_field_fn(params["f"]),
        F=_field_fn(params["F"]), delta=float(params["delta"]),
        T=float(params["T"]), K=int(params["K"]))
    tr = pdesim.schrodinger_trace(
        cfg, n_t=int(params.get("n_t", pdesim.DEFAULT_TIME_STEPS)))
    pdesim.trace_to_csv(tr, os.path.join(out, "trace.csv"))
    pdesim.schrodinger_config_to_json(cfg, os.path.join(out, "config.json"))
    free = pdesim.SchrodingerConfig(
        V=cfg.V, f=cfg.f, F=lambda x: 0.0 * np.asarray(x),
        delta=cfg.delta, T=cfg.T, K=cfg.K)
    drift = pdesim.schrodinger_mass_drift(free)
    checks = [CheckOutcome("mass-conservation", drift < 1e-8,
                           f"probe-only companion drift {drift:.6g}"),
              CheckOutcome("mode-budget-clean", len(tr.notes) == 0,
                           "; ".join(tr.notes) or "no truncation warnings")]
    return ["trace.csv", "config.json"], checks, []


def _run_windows(params, out, rng):
    K = int(params["K_trunc"])
    m = int(params["m"])
    V1, V2 = _potential(params["V1"]), _potential(params["V2"])
    l1 = np.array([p.lam for p in dirichlet_eigs(V1, K)])
    l2 = np.array([p.lam for p in dirichlet_eigs(V2, K)])
    if params["family"] == "cos":
        w = harmonics.build_cos_window(l1, l2, m, float(params["T"]), K)
    else:
        w = harmonics.build_exp_window(l1, l2, m, float(params["delta"]), K)
    harmonics.window_to_csv(w, os.path.join(out, "window.csv"))
    harmonics.frequencies_to_csv(np.sort(w.freqs), os.path.join(out, "freqs.csv"))
    checks = [CheckOutcome("constraint-residuals", w.max_residual <= 1e-6,
                           f"max residual {w.max_residual:.6g}")]
    lines = [f"{len(w.freqs)} constraints, family {params['family']}"]
    return ["window.csv", "freqs.csv"], checks, lines


def _run_interp(params, out, rng):
    V = _potential(params["V"])
    P = _index_list(params["P"])
    eps = float(params["epsilon"])
    if "c" in params:
        c = np.asarray(params["c"], dtype=np.float64)
    else:
        c = rng.standard_normal(len(P))
        c /= np.sqrt(np.sum(np.asarray(P, dtype=np.float64) ** 2 * c**2))
    it = harmonics.interpolate_lp(c, P, eps, V)
    harmonics.interpolant_to_csv(it, os.path.join(out, "interp.csv"))
    bound = float(params.get("residual_bound", 1e-6))
    checks = [CheckOutcome("constraint-residuals", it.max_residual <= bound,
                           f"max residual {it.max_residual:.6g} vs bound {bound:.6g}")]
    lines = [f"norm witness {it.witness:.6g}"]
    return ["interp.csv"], checks, lines


def _run_theorem1(params, out, rng):
    """Two potentials agreeing near x=1, differing data, then reconstruction."""
    eps = float(params.get("epsilon", 0.3))
    count = int(params.get("S_count", 40))
    xf = np.linspace(0.0, 1.0, 16385)
    vals = 5.0 * np.exp(-50.0 * (xf - 0.3) ** 2) * (xf <= 0.65)
    V_true = PotentialField(vals)
    V_other = PotentialField.zero()
    S = inverse.IndexSet(tuple(range(1, count + 1)))
    cert = inverse.data_agreement_certificate(V_true, V_other, S, tol=1e-8)
    data = inverse.forward_data(V_true, S, count)
    tail_x = np.linspace(1.0 - eps, 1.0, 257)
    w = np.concatenate([np.ones(count), 0.05 * np.ones(count)])
    problem = inverse.ReconstructionProblem(
        data=data, known_tail=tuple(V_true(tail_x)), epsilon=eps, weights=w)
    report = inverse.reconstruct(problem, PotentialField.zero(), max_iter=40)
    inverse.report_to_json(report, os.path.join(out, "report.json"))
    x = np.linspace(0.0, 1.0, 4097)
    _write_csv(os.path.join(out, "potentials.csv"), ["x", "v_true", "v_other"],
               np.column_stack([x, V_true(x), V_other(x)]))
    _write_csv(os.path.join(out, "model.csv"), ["x", "v_hat", "v_true"],
               np.column_stack([x, report.V_hat(x), V_true(x)]))
    err = _rel_l2(report.V_hat, V_true)
    checks = [
        CheckOutcome("data-differ", not cert.agrees,
                     f"worst gap {cert.worst_gap:.6g} at k={cert.worst_index}"),
        CheckOutcome("recovery-error", err <= 0.05,
                     f"relative L2 error {err:.6g} vs bound 0.05"),
    ]
    lines = [f"reconstruction {report.status} after {report.iterations} iterations"]
    return ["potentials.csv", "report.json", "model.csv"], checks, lines


def _run_theorem2(params, out, rng):
    """Zero-density plateau for the difference of two solution samplers."""
    x0 = float(params.get("x0", 0.6))
    height = float(params.get("step_height", 4.0))
    cut = float(params.get("cut", 0.5))
    radii = [float(r) for r in params.get("radii", (50.0, 100.0, 200.0))]
    x = np.linspace(0.0, 1.0, 4097)
    V2 = PotentialField(np.where(x < cut, height, 0.0),
                        interp_rule="piecewise-constant")
    F = analytic.build_F(PotentialField.zero(), V2, x0)
    prof = analytic.density_profile(F, radii)
    analytic.density_to_csv(prof, os.path.join(out, "density.csv"))
    bound = x0 / math.pi + 0.02
    checks = [CheckOutcome("plateau-bound", prof.plateau <= bound,
                           f"plateau {prof.plateau:.6g} vs bound {bound:.6g}")]
    lines = [f"radii {radii}"]
    return ["density.csv"], checks, lines


def _run_theorem4(params, out, rng):
    """Exceptional-set density, exp window feasibility, mode extraction."""
    delta = float(params.get("delta", 0.5))
    K_win = int(params.get("K_trunc", 12))
    K_exc = int(params.get("K_exc", 200))
    m = int(params.get("m", 4))
    V0 = PotentialField.zero()
    V1 = PotentialField.constant(1.0)

    zero = lambda x: 0.0 * np.asarray(x)
    exc = pdesim.exceptional_set_P(V0, zero, zero, 0.5, K_exc)
    with open(os.path.join(out, "exceptional.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k"])
        for k in exc.members:
            wr.writerow([k])
    expected = tuple(range(4, K_exc + 1, 4))
    dens = exc.density(K_exc)
    checks = [
        CheckOutcome("exceptional-members", exc.members == expected,
                     f"{len(exc.members)} members up to k=200"),
        CheckOutcome("exceptional-density", abs(dens - 0.25) <= 1e-3,
                     f"density {dens:.6g} vs delta/2 = 0.25"),
    ]

    l1 = np.array([p.lam for p in dirichlet_eigs(V0, K_win)])
    l2 = np.array([p.lam for p in dirichlet_eigs(V1, K_win)])
    w = harmonics.build_exp_window(l1, l2, m, delta, K_win)
    harmonics.window_to_csv(w, os.path.join(out, "window.csv"))
    checks.append(CheckOutcome("window-residuals", w.max_residual <= 1e-6,
                               f"max residual {w.max_residual:.6g}"))

    f = _field_fn({"kind": "poly", "p": 1, "q": 1})
    F = _field_fn({"kind": "sine", "k": 1})
    cfg = pdesim.SchrodingerConfig(V=V0, f=f, F=F, delta=delta, T=delta, K=K_win)
    pairs, _A, (fhat, Fhat, ind) = pdesim.schrodinger_modes(
        cfg, np.array([0.0, delta]))
    lams = np.array([p.lam for p in pairs])
    target = fhat[m - 1] - (Fhat[m - 1] + ind[m - 1]) / lams[m - 1]
    w_ann = harmonics.build_exp_window(lams, [], m, delta, K_win)
    tr = pdesim.schrodinger_trace(cfg, n_t=8192)
    pdesim.trace_to_csv(tr, os.path.join(out, "trace.csv"))
    got = harmonics.pair_window_with_trace(w_ann, tr.t_grid, tr.left)
    checks.append(CheckOutcome("mode-extraction", abs(got - target) <= 1e-4,
                               f"window pairing error {abs(got - target):.6g}"))
    lines = [f"extracted mode {m} coefficient {got.real:.6g}{got.imag:+.6g}j"]
    return ["exceptional.csv", "window.csv", "trace.csv"], checks, lines


HANDLERS = {
    "eigs": _run_eigs,
    "zeros": _run_zeros,
    "reconstruct": _run_reconstruct,
    "wave-trace": _run_wave_trace,
    "schrod-trace": _run_schrod_trace,
    "windows": _run_windows,
    "interp": _run_interp,
    "theorem1-pipeline": _run_theorem1,
    "theorem2-pipeline": _run_theorem2,
    "theorem4-pipeline": _run_theorem4,
}


def run(spec, out_dir=None, seed=None, threads=1):
    """Execute a validated spec.  Returns (exit status, artifact paths)."""
    if threads < 1:
        raise ValueError("threads must be at least 1")
    out = out_dir or os.environ.get(OUT_ENV_VAR) or spec.output_dir or DEFAULT_OUT
    os.makedirs(out, exist_ok=True)
    use_seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(use_seed)
    artifacts, checks, lines = HANDLERS[spec.kind](spec.parameters, out, rng)

    summary = [
        "sturmkit experiment summary",
        f"build: {BUILD_ID}",
        f"kind: {spec.kind}",
        f"seed: {use_seed}",
        f"threads: {threads}",
        f"parameters: {json.dumps(spec.parameters, sort_keys=True)}",
        f"artifacts: {', '.join(artifacts)}",
    ]
    summary.extend(lines)
    for c in checks:
        verdict = "pass" if c.passed else "FAIL"
        summary.append(f"check {c.name}: {verdict} ({c.detail})")
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write("\n".join(summary) + "\n")
    paths = [os.path.join(out, a) for a in artifacts]
    paths.append(os.path.join(out, "summary.txt"))
    return 0, paths


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="sturmkit",
        description="Spectral workbench experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*COMMAND_KINDS, "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("--spec", required=True, help="path to a JSON spec")
        if name != "validate":
            sp.add_argument("--out", help="output directory")
            sp.add_argument("--seed", type=int, help="override the spec seed")
            sp.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        with open(args.spec) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return 1
    diags = validate_doc(doc)
    if args.command == "validate":
        for d in diags:
            print(d)
        return 1 if diags else 0
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return 1

    spec = ExperimentSpec(kind=doc["kind"], parameters=doc.get("parameters", {}),
                          seed=doc.get("seed", 0),
                          output_dir=doc.get("output_dir", ""))
    if spec.kind not in COMMAND_KINDS[args.command]:
        print(f"error: kind {spec.kind!r} does not belong to "
              f"subcommand {args.command!r}", file=sys.stderr)
        return 1
    if args.threads < 1:
        print("error: threads must be at least 1", file=sys.stderr)
        return 1
    try:
        status, paths = run(spec, out_dir=args.out, seed=args.seed,
                            threads=args.threads)
    except Exception as exc:
        print(f"error: {spec.kind}: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return status


if __name__ == "__main__":
    sys.exit(main())
