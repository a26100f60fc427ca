"""Named verification suites used by the command line and the acceptance tests.

Each suite takes an ``ExperimentConfig`` and returns a ``SuiteResult``: a
list of named checks with a pass flag and the numbers behind it.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import mpmath
import numpy as np

from .config import ExperimentConfig
from .lyapunov import estimate_le_furstenberg, estimate_le_norm
from .random_chain import (NoiseModel, concentration_check, empirical_proj_measure,
                           ergodic_average, stationarity_test)
from .scalar_maps import CircleMap, find_critical_sets, map_from_spec
from .symbolic import (RegionParams, check_grammar_soundness, check_bad_then_good,
                       gn_complement_scaling, first_version_block_batch, property_B_batch,
                       verify_allowed_words, verify_word_lemmas)
from .torus_dynamics import (ProjPoint, TorusPoint, det_dH_formula, enumerate_preimages, f_step,
                             is_nondegenerate, jacobian_F_omega, mp_three_step_H,
                             numerical_det_dH, rho)

SUITES = ("density", "cones", "grammar", "lemma53", "propertyB", "stationarity", "concentration")


@dataclass
class Check:
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    informational: bool = False


@dataclass
class SuiteResult:
    suite: str
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def first_failure(self) -> str | None:
        for c in self.checks:
            if not c.passed and not c.informational:
                return c.name
        return None

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks]}


def _map(cfg: ExperimentConfig, L: float | None = None) -> CircleMap:
    spec = dict(cfg["map"])
    if L is not None:
        spec["L"] = L
    return map_from_spec(spec)


def _noise(cfg: ExperimentConfig, stream_id: int = 0, eps: float | None = None) -> NoiseModel:
    return NoiseModel(cfg["noise"]["epsilon"] if eps is None else eps, int(cfg["noise"]["seed"]), stream_id)


def _regions(cfg: ExperimentConfig) -> RegionParams:
    r = cfg["regions"]
    return RegionParams(c=r["c"], p=r["p"], beta=r["beta"], version=r["version"], c0=r["c0"])


# ---------------------------------------------------------------------------
# density: closed forms for the three-step map and its preimages
# ---------------------------------------------------------------------------

def sample_nondegenerate(fmap: CircleMap, eps: float, n: int, rng: np.random.Generator,
                         tol: float = 1e-3):
    """Draw ``(q0, w)`` pairs uniformly and keep the nondegenerate ones."""
    out = []
    while len(out) < n:
        q0 = ProjPoint(rng.random(), rng.random(), rng.random() * np.pi)
        w = rng.uniform(-eps, eps, 3)
        if is_nondegenerate(fmap, q0, w, tol):
            out.append((q0, w))
    return out


def _mp_q3(fmap, q0, w, dps):
    with mpmath.workdps(dps):
        return mp_three_step_H(fmap, [mpmath.mpf(v) for v in q0], [mpmath.mpf(v) for v in w])


def det_checks(fmap: CircleMap, cases, dps: int = 60) -> dict:
    """Largest relative gaps: closed form vs finite differences, and vs ``rho |f''|``."""
    fd_err = rho_err = 0.0
    for q0, w in cases:
        formula = det_dH_formula(fmap, q0, w)
        fd = numerical_det_dH(fmap, q0, w, dps=dps)
        fd_err = max(fd_err, abs(formula - fd) / abs(fd))
        weight = rho(fmap, _mp_q3(fmap, q0, w, dps), dps=dps) * abs(fmap.d2((q0[0] + w[0]) % 1.0))
        rho_err = max(rho_err, abs(abs(formula) - weight) / weight)
    return {"fd_rel_err": fd_err, "rho_rel_err": rho_err, "samples": len(cases)}


def jacobian_check(fmap: CircleMap, eps: float, n: int, rng: np.random.Generator,
                   h: float = 1e-6) -> float:
    """Largest relative gap between ``dF_w`` and a five-point difference quotient."""
    worst = 0.0
    for _ in range(n):
        p = TorusPoint(rng.random(), rng.random())
        w = rng.uniform(-eps, eps)
        J = jacobian_F_omega(fmap, p, w)
        fd = np.empty((2, 2))
        for k in range(2):
            vals = []
            for m in (-2, -1, 1, 2):
                q = np.array(p, dtype=float)
                q[k] += m * h
                vals.append(np.array(f_step(fmap, q[0], q[1], w)))
            diff = [(v - vals[1] + 0.5) % 1.0 - 0.5 for v in vals]  # unwrap around vals[1]
            fd[:, k] = (diff[0] - 8 * diff[1] + 8 * diff[2] - diff[3]) / (12 * h)
        worst = max(worst, float(np.max(np.abs(J - fd)) / np.max(np.abs(J))))
    return worst


def unit_det_check(fmap: CircleMap, eps: float, n: int, rng: np.random.Generator) -> float:
    x = rng.random(n)
    w = rng.uniform(-eps, eps, n)
    d = fmap.d1((x + w) % 1.0)
    M = np.empty((n, 2, 2))
    M[:, 0, 0], M[:, 0, 1], M[:, 1, 0], M[:, 1, 1] = d, -1.0, 1.0, 0.0
    return float(np.max(np.abs(np.abs(np.linalg.det(M)) - 1.0)))


def preimage_checks(fmap: CircleMap, cases, eps: float, m2: int, dps: int = 40) -> dict:
    """Recovery of the generating triple and the preimage count bound."""
    worst = 0.0
    too_many = 0
    max_count = 0
    double_ok = 0
    for q0, w in cases:
        pre = enumerate_preimages(fmap, _mp_q3(fmap, q0, w, dps), q0, eps, dps=dps)
        err = min((float(np.max(np.abs(np.array(t) - w))) for t in pre), default=np.inf)
        worst = max(worst, err)
        max_count = max(max_count, len(pre))
        too_many += len(pre) > m2
        q3d = ProjPoint(*(float(v) for v in _mp_q3(fmap, q0, w, dps)))
        pre_d = enumerate_preimages(fmap, q3d, q0, eps)
        double_ok += any(np.max(np.abs(np.array(t) - w)) <= 1e-9 for t in pre_d)
    return {"max_recovery_err": worst, "count_violations": too_many, "max_count": max_count,
            "M2": m2, "samples": len(cases), "double_precision_recovered": double_ok / len(cases)}


def suite_density(cfg: ExperimentConfig) -> SuiteResult:
    fmap = _map(cfg)
    crit = find_critical_sets(fmap)
    eps = cfg["noise"]["epsilon"]
    v = cfg["verify"]
    rng = _noise(cfg, 101).generator()
    cases = sample_nondegenerate(fmap, eps, v["n_density"], rng)
    det = det_checks(fmap, cases, v["dps"])
    jac = jacobian_check(fmap, eps, v["n_density"], rng)
    unit = unit_det_check(fmap, eps, v["n_samples"], rng)
    pcases = sample_nondegenerate(fmap, eps, v["n_preimage"], rng)
    pre = preimage_checks(fmap, pcases, eps, crit.m2)
    return SuiteResult("density", [
        Check("det_dH_vs_finite_differences", det["fd_rel_err"] <= 1e-5,
              {"max_rel_err": det["fd_rel_err"], "samples": det["samples"]}),
        Check("rho_weight_vs_det_dH", det["rho_rel_err"] <= 1e-5,
              {"max_rel_err": det["rho_rel_err"], "samples": det["samples"]}),
        Check("jacobian_vs_finite_differences", jac <= 1e-6, {"max_rel_err": jac}),
        Check("unit_determinant", unit <= 1e-12, {"max_abs_err": unit, "samples": v["n_samples"]}),
        Check("preimage_recovery", pre["max_recovery_err"] <= 1e-9,
              {k: pre[k] for k in ("max_recovery_err", "samples", "double_precision_recovered")}),
        Check("preimage_count", pre["count_violations"] == 0,
              {k: pre[k] for k in ("count_violations", "max_count", "M2")}),
    ])


# ---------------------------------------------------------------------------
# symbolic suites
# ---------------------------------------------------------------------------

def suite_cones(cfg: ExperimentConfig) -> SuiteResult:
    fmap = _map(cfg)
    crit = find_critical_sets(fmap)
    params = _regions(cfg)
    n = cfg["verify"]["n_samples"]
    rng = _noise(cfg, 201).generator()
    checks = []
    for case in "abcdef":
        r = verify_word_lemmas(fmap, crit, params, case, n, rng)
        checks.append(Check(f"case_{case}", r.containment_violations == 0 and r.growth_violations == 0
                            and r.adjoint_violations == 0, asdict(r)))
    for r in verify_allowed_words(fmap, crit, params, max(n // 10, 1000), rng=rng):
        checks.append(Check(r.case, r.containment_violations == 0 and r.growth_violations == 0
                            and r.adjoint_violations == 0, asdict(r)))
    return SuiteResult("cones", checks)


def suite_grammar(cfg: ExperimentConfig) -> SuiteResult:
    fmap = _map(cfg)
    crit = find_critical_sets(fmap)
    r = check_grammar_soundness(fmap, crit, _regions(cfg), _noise(cfg, 301),
                                cfg["verify"]["n_orbits"], int(cfg["regions"]["N"]))
    return SuiteResult("grammar", [Check("grammar_soundness", r.violations == 0, asdict(r))])


def suite_lemma53(cfg: ExperimentConfig) -> SuiteResult:
    fmap = _map(cfg)
    crit = find_critical_sets(fmap)
    eps = cfg["noise"]["epsilon"]
    r = check_bad_then_good(fmap, crit, _regions(cfg), cfg["verify"]["n_orbits"], eps, _noise(cfg, 401))
    return SuiteResult("lemma53", [Check("bad_then_good", r.violations == 0, asdict(r))])


def suite_property_b(cfg: ExperimentConfig) -> SuiteResult:
    fmap = _map(cfg)
    crit = find_critical_sets(fmap)
    params = _regions(cfg)
    N = int(cfg["regions"]["N"])
    nb = cfg["verify"]["n_blocks"]
    r = property_B_batch(fmap, crit, RegionParams(params.c, params.p, params.beta, "thm2"),
                         _noise(cfg, 501), nb, N)
    r1 = first_version_block_batch(fmap, crit, params.beta, _noise(cfg, 502), nb, N)
    return SuiteResult("propertyB", [
        Check("sigma1_lower_bound", r.sigma_violations == 0, asdict(r)),
        Check("contracted_angle", r.angle_violations == 0, asdict(r)),
        Check("first_version_blocks", r1.sigma_violations == 0 and r1.angle_violations == 0, asdict(r1)),
    ])


# ---------------------------------------------------------------------------
# chain suites
# ---------------------------------------------------------------------------

def suite_stationarity(cfg: ExperimentConfig) -> SuiteResult:
    fmap = _map(cfg)
    noise = _noise(cfg, 601)
    st = stationarity_test(fmap, noise, cfg["verify"]["n_orbits"], (32, 32), 2)
    ea = ergodic_average(fmap, _noise(cfg, 602), 10 * cfg["chain"]["n_steps"])
    return SuiteResult("stationarity", [
        Check("two_step_pushforward_uniform", st.p_value > 0.01, asdict(st)),
        Check("ergodic_average", abs(ea.z_score) <= 3.0, {**asdict(ea), "z_score": ea.z_score}),
    ])


def concentration_constants(cfg: ExperimentConfig, Ls=None) -> list[dict]:
    eps = cfg["noise"]["epsilon"]
    ch = cfg["chain"]
    rows = []
    for k, L in enumerate(Ls or cfg["sweep"]["L"]):
        m = empirical_proj_measure(_map(cfg, L), _noise(cfg, 700 + k), ch["burn_in"], ch["n_steps"],
                                   tuple(ch["grid"]))
        r = concentration_check(m, L, eps)
        rows.append({"L": float(L), "c_hat": r.c_hat, "band_mass": r.band_mass,
                     "worst_box": list(r.worst_box)})
    return rows


def suite_concentration(cfg: ExperimentConfig) -> SuiteResult:
    rows = concentration_constants(cfg)
    c = np.array([r["c_hat"] for r in rows])
    spread = float(np.max(np.abs(c / c.mean() - 1.0)))
    fmap = _map(cfg)
    crit = find_critical_sets(fmap)
    fit = gn_complement_scaling(fmap, crit, _regions(cfg), _noise(cfg, 710),
                                tuple(cfg["verify"]["N_values"]), cfg["verify"]["n_orbits"])
    return SuiteResult("concentration", [
        Check("concentration_constant_stable", spread <= 0.5, {"rows": rows, "max_rel_dev": spread}),
        Check("gn_complement_affine", fit.r_squared > 0.95, asdict(fit)),
    ])


RUNNERS = {
    "density": suite_density,
    "cones": suite_cones,
    "grammar": suite_grammar,
    "lemma53": suite_lemma53,
    "propertyB": suite_property_b,
    "stationarity": suite_stationarity,
    "concentration": suite_concentration,
}


def run_suite(name: str, cfg: ExperimentConfig) -> SuiteResult:
    if name not in RUNNERS:
        raise ValueError(f"unknown suite {name!r}; expected one of {list(SUITES)}")
    return RUNNERS[name](cfg)


# ---------------------------------------------------------------------------
# Lyapunov sweep
# ---------------------------------------------------------------------------

def le_cell(cfg: ExperimentConfig, L: float, eps: float, stream_id: int) -> dict:
    """Both estimators for one ``(L, eps)`` cell of the sweep."""
    fmap = _map(cfg, L)
    noise = _noise(cfg, stream_id, eps)
    ch = cfg["chain"]
    nrm = estimate_le_norm(fmap, noise, n_steps=ch["n_steps"], renorm_every=ch["renorm_every"],
                           n_replicas=ch["n_replicas"])
    fur = estimate_le_furstenberg(fmap, noise, ch["burn_in"], ch["n_steps"], n_replicas=ch["n_replicas"])
    return {"L": float(L), "epsilon": float(eps), "lambda_norm": nrm.lambda_hat,
            "se_norm": nrm.std_error, "lambda_furstenberg": fur.lambda_hat,
            "se_furstenberg": fur.std_error, "agree_3sigma": nrm.agrees_with(fur),
            "ratio_log_L": nrm.lambda_hat / float(np.log(L)), "n_steps": int(ch["n_steps"]),
            "n_replicas": int(ch["n_replicas"])}


def initial_condition_spread(fmap: CircleMap, noise: NoiseModel, n_initial: int = 10,
                             n_steps: int = 10**6, n_replicas: int = 4, seed: int = 0) -> dict:
    """Norm estimates from ``n_initial`` random starts on independent streams.

    Reports the largest pairwise gap in units of the joint standard error
    and the largest deviation from the pooled mean in units of each
    estimate's own standard error.
    """
    rng = np.random.default_rng(seed)
    starts = rng.random((n_initial, 2))
    ests = [estimate_le_norm(fmap, noise.substream(noise.stream_id + 1 + k), tuple(p),
                             n_steps, n_replicas=n_replicas) for k, p in enumerate(starts)]
    lam = np.array([e.lambda_hat for e in ests])
    se = np.array([e.std_error for e in ests])
    w = 1.0 / se ** 2
    pooled = float(np.sum(w * lam) / np.sum(w))
    z = np.abs(lam - pooled) / se
    pair = np.abs(lam[:, None] - lam[None, :]) / np.hypot(se[:, None], se[None, :])
    return {"lambdas": lam.tolist(), "std_errors": se.tolist(), "pooled": pooled,
            "max_z": float(z.max()), "max_pair_z": float(pair.max())}
