"""Command-line experiment runner.

Subcommands: ``verify``, ``chaos``, ``gap``, ``parisi``, ``scaling``, ``sample``.
Settings come from the dataclass defaults, then a JSON config file
(``--config``), then command-line flags, later sources overriding earlier
ones.  All randomness derives from one 64-bit master seed through named
streams, so adding a new stream never changes the existing ones.  Each run
writes CSV tables (17 significant digits, with ``seed`` and ``config_hash``
columns) and a JSON sidecar with the metadata.  The exit status is 0 iff all
checks of the run pass.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import itertools
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy

from . import __version__
from .control import simulate_value_1d, simulate_value_2d
from .diluted import (
    MODELS, SCHEMES, SIGN_CASES, sample_instance, sign_moment_closed_form, sign_moment_oracle,
    write_instance,
)
from .errors import DomainError
from .gaussian import cross_covariance_mc, layer_correlations, sample_gaussian
from .groundstate import MAX_N, chaos_experiment, exact_max
from .gtbound import PsiGrid, gap_at, psi0
from .mixing import CORR_KINDS, KINDS, MixingPair, StepGamma, check_conditions, check_gamma_q_identity
from .parisi import (
    FINE, gamma_support_check, minimize_parisi, parisi_value, phi0, phi0_fd, rs_zero_value,
)

COMMANDS = ("verify", "chaos", "gap", "parisi", "scaling", "sample")
FAULTS = ("t=1", "layer-rho-t")
SUITES = ("sign_moments", "conditions", "gamma_q_identity", "pde", "q0_factorization", "covariance", "control")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    command: str = "verify"
    seed: int = 0
    out: str = "results"
    threads: int = 1
    tol: float = 1e-6
    # Gaussian mixing (parisi, gap, verify)
    mixing_kind: str = "pure"
    K: int = 2
    t: float = 0.5
    corr_kind: str = "scaled"
    # diluted models (chaos, scaling, sample)
    model: str = "kspin"
    scheme: str = "signs-b"
    N: int = 14
    lambdas: list = field(default_factory=lambda: [4.0, 16.0, 64.0])
    replicas: int = 50
    eta: float = 0.1
    epsilon: float = 0.1
    space: str = "cube"
    # Parisi minimization
    k_max: int = 4
    multistart: int = 4
    max_evals: int = 1500
    gamma_P: str = ""  # StepGamma text with ";" for newlines; empty means minimize
    # gap scan
    q_points: int = 21
    epsilons: list = field(default_factory=lambda: [0.1, 0.3, 0.5])
    psi_cells: int = 256
    # scaling
    gauss_samples: int = 500
    me_source: str = "enumeration"
    # verify
    t_values: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    identity_tuples: int = 100
    factorization_gammas: int = 3
    covariance_samples: int = 20_000
    covariance_pairs: int = 20
    control_paths: int = 20_000
    suites: list = field(default_factory=lambda: list(SUITES))
    faults: list = field(default_factory=list)

    def validate(self) -> "ExperimentConfig":
        checks = [
            (self.command in COMMANDS, f"command must be one of {COMMANDS}"),
            (0 <= self.seed < 2 ** 64, "seed must be an unsigned 64-bit integer"),
            (self.threads >= 1, "threads must be positive"),
            (self.tol > 0, "tol must be positive"),
            (self.mixing_kind in KINDS and self.mixing_kind != "custom", "mixing_kind must be pure or ksat"),
            (self.corr_kind in CORR_KINDS, f"corr_kind must be one of {CORR_KINDS}"),
            (self.K >= 1, "K must be positive"),
            (0.0 <= self.t <= 1.0, "t must lie in [0, 1]"),
            (self.model in MODELS, f"model must be one of {MODELS}"),
            (self.scheme in SCHEMES, f"scheme must be one of {SCHEMES}"),
            (1 <= self.N <= MAX_N, f"N must lie in [1, {MAX_N}]"),
            (all(x >= 0 for x in self.lambdas), "lambdas must be nonnegative"),
            (self.replicas >= 1, "replicas must be positive"),
            (self.eta >= 0 and 0 <= self.epsilon <= 1, "need eta >= 0 and epsilon in [0, 1]"),
            (self.space in ("cube", "balanced"), "space must be cube or balanced"),
            (1 <= self.k_max <= 12 and self.multistart >= 1 and self.max_evals >= 10, "bad minimizer settings"),
            (self.q_points >= 2, "q_points must be at least 2"),
            (all(0 <= e < 1 for e in self.epsilons), "epsilons must lie in [0, 1)"),
            (self.psi_cells >= 16, "psi_cells must be at least 16"),
            (self.gauss_samples >= 2, "gauss_samples must be at least 2"),
            (self.me_source in ("enumeration", "parisi"), "me_source must be enumeration or parisi"),
            (all(0 <= x <= 1 for x in self.t_values), "t_values must lie in [0, 1]"),
            (all(f in FAULTS for f in self.faults), f"faults must be among {FAULTS}"),
            (all(x in SUITES for x in self.suites), f"suites must be among {SUITES}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise DomainError(msg)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def hash(self) -> str:
        # output location and worker count do not affect results
        data = {k: v for k, v in self.to_dict().items() if k not in ("out", "threads")}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]

    def mixing(self) -> MixingPair:
        return MixingPair(self.mixing_kind, self.K, self.t, self.corr_kind)


def stream(seed: int, purpose: str) -> np.random.Generator:
    """Generator for a named purpose; independent of every other purpose string."""
    key = int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, rows: Sequence[dict], cfg: ExperimentConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    h = cfg.hash()
    with open(path, "w", newline="") as fh:
        if not rows:
            fh.write("seed,config_hash\n")
            return
        cols = list(rows[0]) + ["seed", "config_hash"]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols[:-2]] + [_fmt(cfg.seed), h])


def write_sidecar(path: Path, cfg: ExperimentConfig, streams: Iterable[str], summary: dict,
                  passed: bool) -> None:
    meta = {
        "command": cfg.command,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "streams": sorted(set(streams)),
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "spinchaos": __version__},
        "tolerance": cfg.tol,
        "summary": summary,
        "passed": bool(passed),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v)}")


def _map(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass
class RunResult:
    tables: dict  # file stem -> rows
    summary: dict
    passed: bool
    streams: list


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _row(suite, check, residual, tolerance, passed):
    return {"suite": suite, "check": check, "residual": float(residual),
            "tolerance": float(tolerance), "passed": bool(passed)}


def suite_sign_moments(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for K in range(1, 5):
        configs = list(itertools.product((-1, 1), repeat=K))
        for t in (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)):
            for case in SIGN_CASES:
                worst = Fraction(0)
                for s1 in configs:
                    for s2 in configs:
                        d = abs(sign_moment_oracle(case, K, t, s1, s2) - sign_moment_closed_form(case, t, s1, s2))
                        worst = max(worst, d)
                rows.append(_row("sign_moments", f"{case} K={K} t={t}", float(worst), 1e-12, worst <= 1e-12))
    return rows


def suite_conditions(cfg: ExperimentConfig, grid_size: int = 10_000) -> list[dict]:
    rows = []
    t_values = [1.0] if "t=1" in cfg.faults else cfg.t_values
    for kind in ("pure", "ksat"):
        for K in range(2, 7):
            if kind == "pure" and K % 2:
                continue
            for t in t_values:
                for corr in CORR_KINDS:
                    rep = check_conditions(MixingPair(kind, K, t, corr), grid_size)
                    for name in ("xi0_below_xi", "zeta_plus_nondecreasing", "zeta_minus_nondecreasing"):
                        r = rep[name]
                        rows.append(_row("conditions", f"{kind} K={K} t={t:g} {corr} {name}",
                                         0.0 if r.passed else 1.0, 0.0, r.passed))
    return rows


def _random_mixing(rng) -> MixingPair:
    kind = str(rng.choice(["pure", "ksat"]))
    K = int(rng.choice([2, 4, 6])) if kind == "pure" else int(rng.integers(2, 6))
    return MixingPair(kind, K, float(rng.uniform(0.1, 0.9)), str(rng.choice(CORR_KINDS)))


def _random_gamma(rng, k_max: int = 4) -> StepGamma:
    k = int(rng.integers(1, k_max + 1))
    q = np.sort(rng.uniform(0.05, 0.95, size=k - 1))
    m = np.sort(rng.uniform(0.0, 3.0, size=k))
    return StepGamma(tuple(q) + (1.0,), tuple(m))


def suite_identity(cfg: ExperimentConfig, rng) -> list[dict]:
    rows = []
    for i in range(cfg.identity_tuples):
        m = _random_mixing(rng)
        g = _random_gamma(rng)
        q = float(rng.uniform(0.05, 1.0)) * (1 if rng.random() < 0.5 else -1)
        r = check_gamma_q_identity(m, g, q, 1e-8)
        rows.append(_row("gamma_q_identity", f"#{i} {m.label()} q={q:.6g}", r.residual, 1e-8, r.passed))
    return rows


def suite_pde(cfg: ExperimentConfig, rng) -> list[dict]:
    rows = []
    for m in (MixingPair("pure", 2), MixingPair("pure", 4), MixingPair("ksat", 3)):
        v = phi0(m, StepGamma.constant(0.0))
        res = abs(v - rs_zero_value(m))
        rows.append(_row("pde", f"gamma=0 closed form {m.label()}", res, 1e-6, res <= 1e-6))
    for i in range(2):
        m = _random_mixing(rng)
        q1 = float(rng.uniform(0.15, 0.85))
        m1 = float(rng.uniform(0, 2))
        g = StepGamma((q1, 1.0), (m1, m1 + float(rng.uniform(0, 3))))
        res = abs(phi0(m, g) - phi0_fd(m, g, 0.02))
        rows.append(_row("pde", f"GH vs FD #{i} {m.label()}", res, 1e-4, res <= 1e-4))
    return rows


def suite_factorization(cfg: ExperimentConfig, rng, n: int | None = None,
                        grid: PsiGrid = PsiGrid(cells=128)) -> list[dict]:
    rows = []
    n = cfg.factorization_gammas if n is None else n
    m = cfg.mixing()
    for i in range(n):
        g = _random_gamma(rng, 3)
        res = abs(psi0(m, g, 0.0, grid, full_2d=True) - 2 * phi0(m, g))
        rows.append(_row("q0_factorization", f"#{i} {m.label()} k={g.k}", res, 1e-6, res <= 1e-6))
    return rows


COVARIANCE_MIXINGS = (("pure", 2), ("ksat", 2))


def suite_covariance(cfg: ExperimentConfig, rng, N: int = 6, n_se: float = 5.0) -> list[dict]:
    rows = []
    for (kind, K), corr in itertools.product(COVARIANCE_MIXINGS, CORR_KINDS):
        m = MixingPair(kind, K, cfg.t if 0 < cfg.t < 1 else 0.5, corr)
        rho = None
        if "layer-rho-t" in cfg.faults and corr == "argument":
            rho = {p: m.t for p in layer_correlations(m)}
        s1 = rng.choice(np.array([-1, 1]), size=(cfg.covariance_pairs, N))
        s2 = rng.choice(np.array([-1, 1]), size=(cfg.covariance_pairs, N))
        est = cross_covariance_mc(m, N, s1, s2, cfg.covariance_samples, rng, rho=rho)
        z = np.abs(est.mean - est.expected) / est.stderr
        worst = float(np.max(z))
        rows.append(_row("covariance", f"{m.label()} N={N} pairs={cfg.covariance_pairs}", worst, n_se,
                         worst <= n_se))
    return rows


def suite_control(cfg: ExperimentConfig, rng) -> list[dict]:
    m = MixingPair("pure", 2, 0.5)
    g = StepGamma((0.5, 1.0), (0.6, 1.5))
    rows = []
    e = simulate_value_1d(m, g, 1.0, "optimal", cfg.control_paths, 2e-3, rng)
    rows.append(_row("control", "1-D optimal feedback z-score", abs(e.z_score), 3.0, e.within(3.0)))
    e = simulate_value_1d(m, g, 1.0, "random", cfg.control_paths, 2e-3, rng)
    rows.append(_row("control", "1-D random policy excess z-score", max(e.z_score, 0.0), 3.0, e.below(3.0)))
    e = simulate_value_2d(m, g, 0.5, None, "optimal", cfg.control_paths, 2e-3, rng, checkpoints=24)
    rows.append(_row("control", "2-D optimal feedback z-score", abs(e.z_score), 3.0, e.within(3.0)))
    return rows


def run_verify(cfg: ExperimentConfig) -> RunResult:
    runners = {
        "sign_moments": lambda: suite_sign_moments(cfg),
        "conditions": lambda: suite_conditions(cfg),
        "gamma_q_identity": lambda: suite_identity(cfg, stream(cfg.seed, "verify/identity")),
        "pde": lambda: suite_pde(cfg, stream(cfg.seed, "verify/pde")),
        "q0_factorization": lambda: suite_factorization(cfg, stream(cfg.seed, "verify/factorization")),
        "covariance": lambda: suite_covariance(cfg, stream(cfg.seed, "verify/covariance")),
        "control": lambda: suite_control(cfg, stream(cfg.seed, "verify/control")),
    }
    rows = []
    for name in SUITES:
        if name in cfg.suites:
            rows += runners[name]()
    suites = {}
    for r in rows:
        s = suites.setdefault(r["suite"], {"checks": 0, "failed": 0, "max_residual": 0.0})
        s["checks"] += 1
        s["failed"] += int(not r["passed"])
        s["max_residual"] = max(s["max_residual"], r["residual"])
    passed = all(r["passed"] for r in rows)
    named = {"gamma_q_identity": "verify/identity", "pde": "verify/pde", "q0_factorization": "verify/factorization",
             "covariance": "verify/covariance", "control": "verify/control"}
    streams = [v for k, v in named.items() if k in cfg.suites]
    return RunResult({"verify": rows}, {"suites": suites}, passed, streams)


# ---------------------------------------------------------------------------
# chaos, parisi, gap
# ---------------------------------------------------------------------------


def run_chaos(cfg: ExperimentConfig) -> RunResult:
    params = {"model": cfg.model, "K": cfg.K, "N": cfg.N}
    stats, summary = chaos_experiment(cfg.scheme, params, cfg.t, cfg.lambdas, cfg.eta, cfg.epsilon,
                                      cfg.replicas, stream(cfg.seed, "chaos"), cfg.space)
    rows = [s.row() for s in stats]
    agg = [{"lambda": s.lam, "median_max_abs_overlap": s.median_max_abs_overlap,
            "mean_max_abs_overlap": s.mean_max_abs_overlap, "median_set_size": s.median_set_size,
            "replicas": s.replicas} for s in summary]
    med = [a["median_max_abs_overlap"] for a in agg]
    trend = all(b <= a for a, b in zip(med, med[1:]))
    strict = len(med) < 2 or med[-1] < med[0]
    summary_out = {"medians": med, "non_increasing": trend, "last_below_first": strict}
    return RunResult({"chaos": rows, "chaos_summary": agg}, summary_out, trend and strict, ["chaos"])


def _estimate(cfg: ExperimentConfig, purpose: str):
    return minimize_parisi(cfg.mixing(), cfg.k_max, stream(cfg.seed, purpose), cfg.multistart,
                           max_evals=cfg.max_evals)


def run_parisi(cfg: ExperimentConfig) -> RunResult:
    est = _estimate(cfg, "parisi")
    rows = [{"k": r.k, "value": r.value, "evaluations": r.evaluations, "converged": r.converged,
             "gamma": r.gamma.to_text().strip().replace("\n", ";")} for r in est.per_k]
    sup = gamma_support_check(est)
    summary = {"value": est.value, "k": est.k, "gamma": est.gamma_hat.to_text(), "cap_active": est.cap_active,
               "support": dataclasses.asdict(sup), "rs_zero_value": rs_zero_value(cfg.mixing())}
    return RunResult({"parisi": rows}, summary, est.value <= rs_zero_value(cfg.mixing()) + cfg.tol, ["parisi"])


def _gap_row(args):
    mixing, gamma, q, two_p, cells = args
    return gap_at(mixing, gamma, q, two_p, PsiGrid(cells=cells), FINE).row()


def run_gap(cfg: ExperimentConfig) -> RunResult:
    m = cfg.mixing()
    streams = []
    if cfg.gamma_P:
        gP = StepGamma.from_text(cfg.gamma_P.replace(";", "\n"))
    else:
        gP = _estimate(cfg, "gap/parisi").gamma_hat
        streams.append("gap/parisi")
    qs = [float(q) for q in np.linspace(-1.0, 1.0, cfg.q_points) if abs(q) > 1e-12]
    two_p = 2.0 * parisi_value(m, gP, FINE)
    rows = _map(_gap_row, [(m, gP, q, two_p, cfg.psi_cells) for q in qs], cfg.threads)
    eta = [{"epsilon": e, "eta_hat": -max([r["gap"] for r in rows if abs(r["q"]) > e], default=float("nan"))}
           for e in cfg.epsilons]
    passed = all(r["gap"] <= cfg.tol for r in rows)
    summary = {"gamma_P": gP.to_text(), "two_parisi": two_p, "max_gap": max(r["gap"] for r in rows),
               "eta_hat": {str(e["epsilon"]): e["eta_hat"] for e in eta}}
    return RunResult({"gap": rows, "gap_eta": eta}, summary, passed, streams)


# ---------------------------------------------------------------------------
# scaling and sampling
# ---------------------------------------------------------------------------


def gaussian_mixing_for(model: str, K: int) -> MixingPair:
    """Gaussian mixing whose covariance matches the centred diluted model per unit lambda."""
    if model == "ksat":
        return MixingPair("ksat", K)
    if model == "kspin":
        return MixingPair("pure", K)
    raise DomainError("scaling predictions are defined for kspin and ksat")


def scaling_prediction(model: str, K: int, lam: float, me: float) -> float:
    if model == "ksat":
        return -lam / 2 ** K + np.sqrt(lam) / 2 ** K * me
    return np.sqrt(lam) * me


def _diluted_max(args):
    model, K, N, lam, ss = args
    inst = sample_instance(model, K, N, lam, np.random.default_rng(ss))
    return exact_max(inst, N).max_value / N


def _gauss_max(args):
    mixing, N, ss = args
    return exact_max(sample_gaussian(mixing, N, np.random.default_rng(ss)), N).max_value / N


def gaussian_enumeration_mean(mixing: MixingPair, N: int, samples: int, seed_seq, threads: int = 1):
    vals = np.array(_map(_gauss_max, [(mixing, N, s) for s in seed_seq.spawn(samples)], threads))
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


def _seed_seq(cfg: ExperimentConfig, purpose: str) -> np.random.SeedSequence:
    key = int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:8], "little")
    return np.random.SeedSequence(cfg.seed, spawn_key=(key,))


def run_scaling(cfg: ExperimentConfig) -> RunResult:
    gm = gaussian_mixing_for(cfg.model, cfg.K)
    streams = ["scaling/diluted"]
    if cfg.me_source == "parisi":
        est = minimize_parisi(gm, cfg.k_max, stream(cfg.seed, "scaling/parisi"), cfg.multistart,
                              max_evals=cfg.max_evals)
        me, me_se = est.value, 0.0
        streams.append("scaling/parisi")
    else:
        me, me_se = gaussian_enumeration_mean(gm, cfg.N, cfg.gauss_samples, _seed_seq(cfg, "scaling/gaussian"),
                                              cfg.threads)
        streams.append("scaling/gaussian")
    base = _seed_seq(cfg, "scaling/diluted")
    rows = []
    for lam, ss in zip(cfg.lambdas, base.spawn(len(cfg.lambdas))):
        vals = np.array(_map(_diluted_max, [(cfg.model, cfg.K, cfg.N, float(lam), s)
                                            for s in ss.spawn(cfg.replicas)], cfg.threads))
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        pred = scaling_prediction(cfg.model, cfg.K, float(lam), me)
        resid = mean - pred
        rows.append({"lambda": float(lam), "mean_max_over_N": mean, "stderr": se, "me_N": me,
                     "me_stderr": me_se, "me_source": cfg.me_source, "prediction": pred, "residual": resid,
                     "residual_over_sqrt_lambda": resid / np.sqrt(lam) if lam > 0 else 0.0,
                     "ratio": mean / pred if pred != 0 else float("nan")})
    scaled = [abs(r["residual_over_sqrt_lambda"]) for r in rows if r["lambda"] > 0]
    decreasing = all(b < a for a, b in zip(scaled, scaled[1:]))
    summary = {"abs_residual_over_sqrt_lambda": scaled, "decreasing": decreasing,
               "last_ratio": rows[-1]["ratio"] if rows else None}
    return RunResult({"scaling": rows}, summary, decreasing, streams)


def run_sample(cfg: ExperimentConfig) -> RunResult:
    out = Path(cfg.out)
    base = _seed_seq(cfg, "sample")
    (out / "instances").mkdir(parents=True, exist_ok=True)
    rows = []
    for (i, lam), ss in zip(enumerate(cfg.lambdas), base.spawn(len(cfg.lambdas))):
        for r, child in enumerate(ss.spawn(cfg.replicas)):
            inst = sample_instance(cfg.model, cfg.K, cfg.N, float(lam), np.random.default_rng(child))
            name = f"instance_l{i}_r{r}.txt"
            write_instance(inst, out / "instances" / name)
            rows.append({"lambda": float(lam), "replica": r, "n_clauses": inst.n_clauses,
                         "file": f"instances/{name}"})
    return RunResult({"sample": rows}, {"instances": len(rows)}, True, ["sample"])


RUNNERS = {"verify": run_verify, "chaos": run_chaos, "gap": run_gap, "parisi": run_parisi,
           "scaling": run_scaling, "sample": run_sample}


def execute(cfg: ExperimentConfig) -> RunResult:
    cfg.validate()
    res = RUNNERS[cfg.command](cfg)
    out = Path(cfg.out)
    for stem, rows in res.tables.items():
        write_csv(out / f"{stem}.csv", rows, cfg)
    write_sidecar(out / f"{cfg.command}.json", cfg, res.streams, res.summary, res.passed)
    return res


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinchaos", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker processes for independent q points and replicas")
    p.add_argument("--tol", type=float, help="tolerance for the run's pass/fail assertion")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = json.loads(args.config.read_text()) if args.config else {}
    data["command"] = args.command
    for name in ("seed", "out", "threads", "tol"):
        v = getattr(args, name)
        if v is not None:
            data[name] = v
    return ExperimentConfig.from_dict(data)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        res = execute(cfg)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = "PASS" if res.passed else "FAIL"
    print(f"{cfg.command}: {status} (outputs in {cfg.out})")
    return 0 if res.passed else 1


if __name__ == "__main__":
    sys.exit(main())
