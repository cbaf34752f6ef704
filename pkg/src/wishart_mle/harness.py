"""Monte Carlo experiments: simulate many paths, estimate, rescale, compare with limit laws.

Replication ``r`` always draws from ``RngStream(seed, r)``, so its result does
not depend on batch size, job count, or the fate of other replications.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import asymptotics
from .exceptions import CaseParameterMismatch, ValidationError, WishartError
from .io import dump_json
from .mle import VARIANTS, estimate, pipeline_from_stats
from .model import WishartSpec
from .pathfun import StatsAccumulator
from .sim import BatchSimulator, RngStream

OVERFLOW_EXPONENT = 700.0
LIMIT_STREAM = 2**32 - 1

# estimator variant matching each limit law
CASE_VARIANT = {
    "thm2.1": "joint_sym", "thm2.2": "joint_sym", "thm2.3": "joint_gen",
    "thm2.4-sym": "b_sym", "thm2.4-gen": "b_gen",
    "thm3.1": "joint_sym", "thm3.2": "joint_sym", "thm3.3": "b_sym", "thm3.4": "b_sym",
    "prop3.1": "b_diag",
}

# (rate for b, rate for alpha)
CASE_SCALING = {
    "thm2.1": "sqrtT", "thm2.2": "sqrtT-T", "thm2.3": "sqrtT",
    "thm2.4-sym": "sqrtT", "thm2.4-gen": "sqrtT",
    "thm3.1": "T-sqrtlogT", "thm3.2": "T-logT", "thm3.3": "T", "thm3.4": "exp",
    "prop3.1": "diag",
}
SCALINGS = ("sqrtT", "sqrtT-T", "T-sqrtlogT", "T-logT", "T", "exp", "diag", "exp-max", "none")

# laws whose moment generating function may be infinite; compared by KS only
NO_MGF = ("thm3.4", "prop3.1")


@dataclass
class ExperimentConfig:
    spec: WishartSpec
    T: float
    N: int
    M: int
    variant: str = "joint_sym"
    case: str | None = None
    scaling: str | None = None
    seed: int = 0
    out_dir: str | None = None
    probes: list | None = None
    alpha_known: bool = True
    a_known: bool = True
    batch: int = 250
    n_limit: int = 20000
    n_inner: int = 200
    mc_samples: int = 200_000
    n_jobs: int = 1

    def __post_init__(self):
        if self.scaling is None:
            self.scaling = CASE_SCALING.get(self.case, "none")
        self.validate()

    def validate(self):
        if self.M < 2 or self.N < 2:
            raise ValidationError("need M >= 2 and N >= 2")
        if self.T <= 0:
            raise ValidationError("T must be positive")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.scaling not in SCALINGS:
            raise ValidationError(f"unknown scaling {self.scaling!r}")
        if self.case is None:
            return
        if self.case not in CASE_VARIANT:
            raise ValidationError(f"unknown case {self.case!r}")
        if CASE_VARIANT[self.case] != self.variant:
            raise CaseParameterMismatch(
                f"case {self.case} describes the {CASE_VARIANT[self.case]} estimator, not {self.variant}")
        if self.scaling != CASE_SCALING[self.case]:
            raise CaseParameterMismatch(f"case {self.case} uses scaling {CASE_SCALING[self.case]}")
        if not self.spec.is_canonical:
            raise CaseParameterMismatch("limit-law comparisons need a = I")
        asymptotics.check_case(self.case, self.spec.alpha, self.spec.b, x=self.spec.x)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "T", "N", "M", "variant", "case", "scaling", "seed", "probes", "alpha_known",
            "a_known", "n_limit", "n_inner", "mc_samples")}
        out["spec"] = self.spec.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        try:
            spec = WishartSpec.from_dict(data.pop("spec"))
        except KeyError:
            raise ValidationError("config needs a spec") from None
        known = set(cls.__dataclass_fields__) - {"spec"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config fields {sorted(unknown)}")
        return cls(spec=spec, **data)


@dataclass
class ExperimentReport:
    config: dict
    rows: list
    scaled: np.ndarray
    labels: list
    laplace_rows: list = field(default_factory=list)
    ks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def failure_rate(self) -> float:
        return sum(r["error"] is not None for r in self.rows) / max(len(self.rows), 1)

    def ok_mask(self) -> np.ndarray:
        return np.array([r["error"] is None for r in self.rows])

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "replications": self.rows,
            "failure_rate": self.failure_rate,
            "laplace": self.laplace_rows,
            "ks": self.ks,
            "summary": self.summary,
        }


# ---------------------------------------------------------------------------
# rescaling


def rates(scaling: str, T: float, b: np.ndarray) -> tuple[np.ndarray, float | None]:
    """Entrywise rate matrix for the b error and scalar rate for the alpha error."""
    d = b.shape[0]
    one = np.ones((d, d))
    if scaling == "sqrtT":
        return math.sqrt(T) * one, math.sqrt(T)
    if scaling == "sqrtT-T":
        return math.sqrt(T) * one, T
    if scaling == "T-sqrtlogT":
        return T * one, math.sqrt(math.log(T))
    if scaling == "T-logT":
        return T * one, math.log(T)
    if scaling == "T":
        return T * one, T
    if scaling == "exp":
        return math.exp(float(b[0, 0]) * T) * one, None
    if scaling == "diag":
        r = asymptotics.diag_rates(b, T)
        return np.diag(r), None
    if scaling == "exp-max":
        bd = np.diag(b)
        return np.exp(np.maximum.outer(bd, bd) * T), None
    return one, 1.0


def _labels(variant: str, d: int, scaling: str, has_alpha: bool) -> list[str]:
    if scaling == "diag" or variant == "b_diag":
        names = [f"b_{i + 1}_{i + 1}" for i in range(d)]
    elif variant in ("joint_gen", "b_gen"):
        names = [f"b_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
    else:
        names = [f"b_{i + 1}_{j + 1}" for i in range(d) for j in range(i, d)]
    return names + (["alpha"] if has_alpha else [])


def _entry(label: str) -> tuple[int, int]:
    _, i, j = label.split("_")
    return int(i) - 1, int(j) - 1


def _flatten(err_b: np.ndarray, err_a: float | None, labels: list[str]) -> list[float]:
    out = []
    for name in labels:
        if name == "alpha":
            out.append(err_a)
        else:
            i, j = _entry(name)
            out.append(float(err_b[i, j]))
    return out


# ---------------------------------------------------------------------------
# simulation


def _run_batch(cfg: ExperimentConfig, reps: list[int], need_qcov: bool, need_ito: bool):
    spec = cfg.spec
    d = spec.d
    sim = BatchSimulator(spec, cfg.T, cfg.N, [RngStream(cfg.seed, r) for r in reps])
    acc = StatsAccumulator(cfg.T, cfg.N, d, len(reps), qcov=need_qcov, ito=need_ito)
    bad = np.zeros(len(reps), dtype=bool)
    buf = []
    for X in sim:
        finite = np.isfinite(X).all(axis=(1, 2))
        if not finite.all():
            bad |= ~finite
            X[~finite] = np.eye(d)  # keep the batch numerically alive; replication is discarded
        buf.append(X.copy())
        if len(buf) == 256:
            acc.push(np.stack(buf, axis=1))
            buf = []
    if buf:
        acc.push(np.stack(buf, axis=1))
    return acc.finalize(), bad, sim.fallbacks.copy()


def _estimate_one(cfg: ExperimentConfig, stats):
    if cfg.variant == "pipeline":
        return pipeline_from_stats(stats, cfg.spec.a if cfg.a_known else None)
    alpha = cfg.spec.alpha if cfg.variant.startswith("b_") else None
    return estimate(stats, cfg.variant, alpha=alpha)


def simulate_estimates(cfg: ExperimentConfig, reps: list[int] | None = None) -> list[dict]:
    """Per-replication estimates (no rescaling); failed replications carry an error string."""
    reps = list(range(cfg.M)) if reps is None else reps
    need_qcov = cfg.variant == "pipeline"
    need_ito = cfg.variant in ("joint_gen", "b_gen")
    batches = [reps[i:i + cfg.batch] for i in range(0, len(reps), cfg.batch)]

    def work(batch):
        stats, bad, fallbacks = _run_batch(cfg, batch, need_qcov, need_ito)
        rows = []
        for k, r in enumerate(batch):
            row = {"rep": r, "b_hat": None, "alpha_hat": None, "error": None,
                   "euler_fallbacks": int(fallbacks[k])}
            if bad[k]:
                row["error"] = "NonFiniteState"
            else:
                try:
                    est = _estimate_one(cfg, stats[k])
                    row["b_hat"] = np.asarray(est.b_hat).tolist()
                    row["alpha_hat"] = est.alpha_hat
                    if est.a_hat is not None:
                        row["a_hat"] = np.asarray(est.a_hat).tolist()
                except (WishartError, np.linalg.LinAlgError) as exc:
                    row["error"] = type(exc).__name__
            rows.append(row)
        return rows

    if cfg.n_jobs != 1 and len(batches) > 1:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=cfg.n_jobs)(delayed(work)(b) for b in batches)
    else:
        parts = [work(b) for b in batches]
    return [row for part in parts for row in part]


# ---------------------------------------------------------------------------
# comparisons


def empirical_laplace(samples_mat, samples_scalar, probes) -> list[dict]:
    """Mean of ``exp(<c, G> + lam H)`` per probe with SE ``std / sqrt(M)``.

    ``samples_mat`` has shape ``(M, d, d)`` (or ``(M, d)`` paired with vector
    probes); ``samples_scalar`` may be ``None``. A probe is rejected when any
    exponent exceeds 700.
    """
    G = np.asarray(samples_mat, float)
    H = None if samples_scalar is None else np.asarray(samples_scalar, float)
    out = []
    for probe in probes:
        c, lam = probe
        expo = np.zeros(G.shape[0]) if c is None else (
            np.einsum("nij,ij->n", G, np.asarray(c, float)) if G.ndim == 3 else G @ np.asarray(c, float))
        if lam:
            if H is None:
                raise ValidationError("probe has a scalar part but samples have none")
            expo = expo + lam * H
        if np.max(expo, initial=-np.inf) > OVERFLOW_EXPONENT:
            out.append({"value": None, "se": None, "rejected": True})
            continue
        vals = np.exp(expo)
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append({"value": float(vals.mean()), "se": se, "rejected": False})
    return out


def default_probes(G_lim: np.ndarray, H_lim: np.ndarray | None, target_sd: float = 0.5) -> list:
    """Five probe directions scaled so the limit exponent has standard deviation ``target_sd``."""
    vector = G_lim.ndim == 2
    d = G_lim.shape[-1]
    if vector:
        dirs = [np.eye(d)[0], np.ones(d) / math.sqrt(d), np.eye(d)[-1]]
    else:
        e11 = np.zeros((d, d))
        e11[0, 0] = 1.0
        off = np.zeros((d, d))
        if d > 1:
            off[0, 1] = off[1, 0] = 0.5
        else:
            off[0, 0] = -1.0
        dirs = [e11, off, np.eye(d) / math.sqrt(d)]

    def scaled(c):
        proj = G_lim @ c if vector else np.einsum("nij,ij->n", G_lim, c)
        sd = proj.std()
        return c * (target_sd / sd) if sd > 0 else c

    probes = [(scaled(c), 0.0) for c in dirs]
    if H_lim is not None:
        lam = target_sd / max(H_lim.std(), 1e-12)
        probes.append((None, lam))
        probes.append((0.5 * scaled(dirs[2]), -0.5 * lam))
    else:
        probes.append((-scaled(dirs[0]), 0.0))
        probes.append((0.5 * (scaled(dirs[0]) + scaled(dirs[1])), 0.0))
    return probes


def _probe_from_config(p, d: int, vector: bool):
    if isinstance(p, dict):
        c = p.get("c")
        lam = float(p.get("lam", 0.0))
    else:
        c, lam = p
    if c is not None:
        c = np.asarray(c, float)
        if vector and c.ndim == 2:
            c = np.diag(c)
    return c, lam


def _theory_laplace(law, c, lam, G_lim, H_lim):
    if law.closed_form:
        return law.laplace(c, lam), 0.0
    row = empirical_laplace(G_lim, H_lim, [(c, lam)])[0]
    return row["value"], row["se"]


def ks_compare(emp: np.ndarray, lim: np.ndarray) -> dict:
    res = sps.ks_2samp(emp, lim)
    return {"statistic": float(res.statistic), "pvalue": float(res.pvalue)}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    spec = cfg.spec
    d = spec.d
    rows = simulate_estimates(cfg)
    rate_b, rate_a = rates(cfg.scaling, cfg.T, spec.b)
    has_alpha = cfg.variant in ("joint_sym", "joint_gen", "pipeline")
    labels = _labels(cfg.variant, d, cfg.scaling, has_alpha)
    scaled = np.full((len(rows), len(labels)), np.nan)
    for k, row in enumerate(rows):
        if row["error"] is not None:
            continue
        b_hat = np.asarray(row["b_hat"])
        if b_hat.ndim == 1:
            b_hat = np.diag(b_hat)
        err_b = rate_b * (b_hat - spec.b)
        err_a = None if not has_alpha else rate_a * (row["alpha_hat"] - spec.alpha)
        if cfg.variant == "b_diag" or cfg.scaling == "diag":
            err_b = np.diag(np.diag(err_b))
        scaled[k] = _flatten(err_b, err_a, labels)
        row["scaled_error"] = scaled[k].tolist()
    report = ExperimentReport(config=cfg.to_dict(), rows=rows, scaled=scaled, labels=labels)
    ok = report.ok_mask()
    good = scaled[ok]
    report.summary = {
        "labels": labels,
        "n_ok": int(ok.sum()),
        "mean": np.mean(good, axis=0).tolist() if len(good) else None,
        "var": np.var(good, axis=0, ddof=1).tolist() if len(good) > 1 else None,
        "histograms": {name: _histogram(good[:, i]) for i, name in enumerate(labels)} if len(good) else {},
    }
    if cfg.case is not None and len(good) > 1:
        _compare_with_law(cfg, report, good)
    if cfg.out_dir is not None:
        write_report(report, cfg.out_dir)
    return report


def _histogram(x: np.ndarray, bins: int = 20) -> dict:
    counts, edges = np.histogram(x, bins=bins)
    return {"counts": counts.tolist(), "edges": edges.tolist()}


def _unpack(good: np.ndarray, labels: list[str], d: int, vector: bool):
    H = good[:, labels.index("alpha")] if "alpha" in labels else None
    n = good.shape[0]
    if vector:
        return good[:, :d], H
    G = np.zeros((n, d, d))
    upper_only = len(labels) - (H is not None) < d * d
    for i, name in enumerate(labels):
        if name == "alpha":
            continue
        a, b = _entry(name)
        G[:, a, b] = good[:, i]
        if upper_only:
            G[:, b, a] = good[:, i]
    return G, H


def _compare_with_law(cfg: ExperimentConfig, report: ExperimentReport, good: np.ndarray):
    spec = cfg.spec
    d = spec.d
    law = asymptotics.make_limit_law(cfg.case, spec.alpha, spec.b, x=spec.x,
                                     mc_samples=cfg.mc_samples, rng=RngStream(cfg.seed, LIMIT_STREAM - 1),
                                     n_inner=cfg.n_inner)
    G_lim, H_lim = law.sample(cfg.n_limit, RngStream(cfg.seed, LIMIT_STREAM))
    vector = G_lim.ndim == 2
    G_emp, H_emp = _unpack(good, report.labels, d, vector)
    if H_emp is None:
        H_lim = None
    for i, name in enumerate(report.labels):
        if name == "alpha":
            lim = H_lim
        elif vector:
            lim = G_lim[:, _entry(name)[0]]
        else:
            lim = G_lim[:, _entry(name)[0], _entry(name)[1]]
        report.ks[name] = ks_compare(good[:, i], lim)
    if cfg.case in NO_MGF and cfg.probes is None:
        return
    probes = default_probes(G_lim, H_lim) if cfg.probes is None else \
        [_probe_from_config(p, d, vector) for p in cfg.probes]
    emp = empirical_laplace(G_emp, H_emp, probes)
    for k, ((c, lam), e) in enumerate(zip(probes, emp)):
        theory, theory_se = _theory_laplace(law, c, lam, G_lim, H_lim)
        row = {"probe": k, "c": None if c is None else np.asarray(c).tolist(), "lam": lam,
               "empirical": e["value"], "theoretical": theory, "se": e["se"], "theory_se": theory_se,
               "rejected": e["rejected"]}
        if not e["rejected"] and theory is not None:
            comb = math.hypot(e["se"], theory_se)
            row["z"] = (e["value"] - theory) / comb if comb > 0 else 0.0
        report.laplace_rows.append(row)


def write_report(report: ExperimentReport, out_dir) -> None:
    """Write ``report.json``, ``errors.csv`` and ``laplace_cmp.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report.to_dict(), out / "report.json")
    with open(out / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rep"] + report.labels)
        for row, vals in zip(report.rows, report.scaled):
            w.writerow([row["rep"]] + [("%.17g" % v) if np.isfinite(v) else "nan" for v in vals])
    with open(out / "laplace_cmp.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["probe", "empirical", "theoretical", "se", "theory_se"])
        for r in report.laplace_rows:
            w.writerow([r["probe"], _fmt(r["empirical"]), _fmt(r["theoretical"]), _fmt(r["se"]),
                        _fmt(r["theory_se"])])


def _fmt(v) -> str:
    return "nan" if v is None else "%.17g" % v


# ---------------------------------------------------------------------------
# discretization study


def mse_table(cfg: ExperimentConfig, Ns, out_dir=None) -> dict:
    """MSE of ``(b, alpha)`` against ``N`` with ``a`` known and estimated, on the same paths.

    Also reports the diffusion-factor error both as ``E[Tr[(a - a_hat)^2]]^{1/2}``
    and as ``E[||a - a_hat||_F^2]^{1/2}``, each with a log-log regression against
    ``N`` (``a_error_fit`` uses the trace form; with upper triangular ``a`` and
    ``a_hat`` it only sees the diagonal).
    """
    spec = cfg.spec
    d = spec.d
    a_true = spec.a
    table = []
    for N in Ns:
        sub = ExperimentConfig(spec=spec, T=cfg.T, N=int(N), M=cfg.M, variant="pipeline",
                               seed=cfg.seed, batch=cfg.batch, n_jobs=cfg.n_jobs)
        reps = list(range(cfg.M))
        errs = {"known": [], "estimated": []}
        a_frob, a_trace, failures = [], [], 0
        for start in range(0, cfg.M, cfg.batch):
            batch = reps[start:start + cfg.batch]
            stats, bad, _ = _run_batch(sub, batch, True, False)
            for k in range(len(batch)):
                if bad[k]:
                    failures += 1
                    continue
                try:
                    known = pipeline_from_stats(stats[k], a_true)
                    est = pipeline_from_stats(stats[k], None)
                except (WishartError, np.linalg.LinAlgError):
                    failures += 1
                    continue
                for mode, e in (("known", known), ("estimated", est)):
                    errs[mode].append(np.concatenate([(e.b_hat - spec.b).ravel(), [e.alpha_hat - spec.alpha]]))
                diff = a_true - est.a_hat
                a_frob.append(float(np.sum(diff * diff)))
                a_trace.append(float(np.trace(diff @ diff)))
        row = {"N": int(N), "failures": failures,
               "a_err_frobenius": math.sqrt(np.mean(a_frob)),
               "a_err_trace": math.sqrt(np.mean(a_trace)) if np.mean(a_trace) >= 0 else None}
        for mode in ("known", "estimated"):
            sq = np.mean(np.square(errs[mode]), axis=0)
            se = np.std(np.square(errs[mode]), axis=0, ddof=1) / math.sqrt(len(errs[mode]))
            for i in range(d):
                for j in range(d):
                    row[f"mse_b{i + 1}{j + 1}_{mode}"] = float(sq[i * d + j])
                    row[f"mse_b{i + 1}{j + 1}_{mode}_se"] = float(se[i * d + j])
            row[f"mse_alpha_{mode}"] = float(sq[-1])
            row[f"mse_alpha_{mode}_se"] = float(se[-1])
        table.append(row)
    logN = np.log([r["N"] for r in table])
    def loglog(key):
        ys = [r[key] for r in table]
        if len(table) < 2 or any(y is None or y <= 0 for y in ys):
            return {}
        slope, intercept = np.polyfit(logN, np.log(ys), 1)
        return {"slope": float(slope), "intercept": float(intercept)}

    result = {"config": cfg.to_dict(), "Ns": [int(n) for n in Ns], "rows": table,
              "a_error_fit": loglog("a_err_trace"), "a_error_fit_frobenius": loglog("a_err_frobenius")}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dump_json(result, out / "report.json")
        keys = list(table[0])
        with open(out / "mse_table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for r in table:
                w.writerow([_fmt(r[k]) if isinstance(r[k], float) or r[k] is None else r[k] for k in keys])
    return result
