"""Scenario configuration and batch execution.

A scenario is one JSON document selecting an equation family, lattice,
potential / frame / initial-state presets, the methods to run and compare,
physical constants and a seed.  Running it produces per-method slice
histories, observables against time, cross-method deviations, and artifacts
(CSV tables, a JSON report, optional SVG figures) in a per-scenario
directory.  Identical configuration (including the seed) yields
byte-identical CSV output.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import green, transport, waveeq
from .clifford import build_gamma_set
from .lattice import Lattice, interior_time_mask, random_smooth_field

_GS = build_gamma_set()

EQUATIONS = ("dirac", "kg-scalar", "kg-2comp", "kg-5comp", "schrodinger")
POTENTIAL_PRESETS = ("zero", "constant-a0", "smooth")
STATE_PRESETS = ("plane-wave", "gaussian", "eigenstate")

# cross-method gates: the spinor kernel and the frame round trip are exact
# reconstructions of the stepping, the two-component kernel shares its step
# matrices; the spectral and reconstruction routes differ from stepping at
# the scheme's order, so they are recorded without a default gate
DEFAULT_TOLERANCES = {
    "dirac": {"kernel": 1e-10, "bundle": 1e-12, "norm_drift": 1e-10},
    "schrodinger": {"kernel": None, "norm_drift": 1e-10},
    "kg-2comp": {"kernel": 1e-9},
    "kg-scalar": {"kernel": None},
    "kg-5comp": {},
}


class ConfigError(ValueError):
    """Scenario document is malformed or references unknown presets."""


@dataclass
class Scenario:
    name: str
    equation: str
    lattice: Lattice
    potential: dict
    frame: dict
    initial_state: dict
    methods: list[str]
    constants: dict
    seed: int = 0
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        try:
            name = raw.get("name", "scenario")
            equation = raw["equation"]
            methods = list(raw.get("methods", ["direct"]))
            latd = raw.get("lattice", {})
            # full-spacetime kernels keep iterated runs desk-scale by default
            born = any(str(m).split(":")[0] == "born" for m in methods)
            nt0, nx0 = (12, 12) if born else (64, 32)
            lattice = Lattice(int(latd.get("nt", nt0)), int(latd.get("nx", nx0)),
                              float(latd.get("dt", 0.05)), float(latd.get("dx", 0.2)))
            potential = dict(raw.get("potential", {"preset": "zero"}))
            frame = dict(raw.get("frame", {"preset": "identity"}))
            initial_state = dict(raw.get("initial_state", {"preset": "plane-wave"}))
            constants = {"m": 1.0, "e": 1.0, "hbar": 1.0, "c": 1.0}
            constants.update(raw.get("constants", {}))
            seed = int(raw.get("seed", 0))
            tolerances = dict(DEFAULT_TOLERANCES.get(equation, {}))
            tolerances.update(raw.get("tolerances", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario document: {exc}") from exc
        sc = cls(name, equation, lattice, potential, frame, initial_state,
                 methods, constants, seed, tolerances)
        sc.validate()
        return sc

    @classmethod
    def from_json(cls, path) -> "Scenario":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self):
        if self.equation not in EQUATIONS:
            raise ConfigError(f"unknown equation '{self.equation}' (pick from {EQUATIONS})")
        if self.potential.get("preset") not in POTENTIAL_PRESETS:
            raise ConfigError(f"unknown preset '{self.potential.get('preset')}' "
                              f"(potentials: {POTENTIAL_PRESETS})")
        if self.frame.get("preset") not in transport.FRAME_PRESETS:
            raise ConfigError(f"unknown preset '{self.frame.get('preset')}' "
                              f"(frames: {sorted(transport.FRAME_PRESETS)})")
        if self.initial_state.get("preset") not in STATE_PRESETS:
            raise ConfigError(f"unknown preset '{self.initial_state.get('preset')}' "
                              f"(states: {STATE_PRESETS})")
        if not self.methods:
            raise ConfigError("methods list is empty")
        for meth in self.methods:
            base = meth.split(":")[0]
            if base not in ("direct", "kernel", "bundle", "born"):
                raise ConfigError(f"unknown method '{meth}'")
            if base in ("bundle", "born") and self.equation != "dirac":
                raise ConfigError(f"method '{meth}' applies to the dirac equation only")
        m = self.constants.get("m")
        if m == "derived" and self.equation not in ("kg-scalar", "kg-2comp", "kg-5comp"):
            raise ConfigError("derived mass is only meaningful for the scalar families")

    def resolved(self) -> dict:
        """Full configuration echo, defaults included."""
        return {
            "name": self.name,
            "equation": self.equation,
            "lattice": {"nt": self.lattice.nt, "nx": self.lattice.nx,
                        "dt": self.lattice.dt, "dx": self.lattice.dx},
            "potential": self.potential,
            "frame": self.frame,
            "initial_state": self.initial_state,
            "methods": self.methods,
            "constants": self.constants,
            "seed": self.seed,
            "tolerances": self.tolerances,
        }


# -- preset resolution ----------------------------------------------------------

def build_potential(sc: Scenario) -> waveeq.PotentialField:
    lat = sc.lattice
    c = sc.constants
    a = np.zeros((4,) + lat.shape)
    preset = sc.potential["preset"]
    if preset == "constant-a0":
        a[0] += float(sc.potential.get("a0", 0.5))
    elif preset == "smooth":
        rng = np.random.default_rng(sc.seed + 1)
        a[0] = float(sc.potential.get("amp0", 0.4)) * random_smooth_field(lat, rng, real=True)
        a[1] = float(sc.potential.get("amp1", 0.3)) * random_smooth_field(lat, rng, real=True)
        if sc.potential.get("static", True):
            a = np.broadcast_to(a[:, :1, :], a.shape).copy()
    return waveeq.PotentialField(lat, a, e=float(c["e"]),
                                 hbar=float(c["hbar"]), c=float(c["c"]))


def build_frame(sc: Scenario, n: int = 4) -> transport.FrameField:
    params = {k: v for k, v in sc.frame.items() if k != "preset"}
    return transport.frame_from_preset(sc.lattice, sc.frame["preset"], n=n, **params)


def resolve_mass(sc: Scenario) -> float:
    m = sc.constants["m"]
    if m != "derived":
        return float(m)
    lat = sc.lattice
    jt = int(sc.initial_state.get("jt", 2))
    jx = int(sc.initial_state.get("jx", 1))
    msq = lat.mode_symbol(jt, 0) ** 2 - lat.mode_symbol(jx, 1) ** 2
    if msq <= 0:
        raise ConfigError(f"harmonics (jt={jt}, jx={jx}) sit outside the lattice "
                          "dispersion cone; no mass can be derived")
    hbar, c = float(sc.constants["hbar"]), float(sc.constants["c"])
    return float(np.sqrt(msq)) * hbar / c


def _normalize(state: np.ndarray, dx: float) -> np.ndarray:
    return state / (np.linalg.norm(state) * np.sqrt(dx))


def initial_dirac_slice(sc: Scenario, A: waveeq.PotentialField, m: float) -> np.ndarray:
    lat = sc.lattice
    preset = sc.initial_state["preset"]
    x = np.arange(lat.nx) * lat.dx
    hbar, c = A.hbar, A.c
    if preset == "plane-wave":
        jx = int(sc.initial_state.get("jx", 1))
        p = lat.mode(jx, 1)
        ktil = lat.mode_symbol(jx, 1)
        h4 = hbar * c * ktil * (_GS.gamma[0] @ _GS.gamma[1]) + m * c * c * _GS.gamma[0]
        evals, vecs = np.linalg.eigh(h4)
        u = vecs[:, int(np.argmax(evals))]  # positive-energy branch
        state = u[:, None] * np.exp(1j * p * x)[None, :]
    elif preset == "gaussian":
        x0 = float(sc.initial_state.get("x0", 0.5 * lat.nx * lat.dx))
        sigma = float(sc.initial_state.get("sigma", 0.1 * lat.nx * lat.dx))
        k = float(sc.initial_state.get("k", 2.0 * np.pi / (lat.nx * lat.dx)))
        envelope = np.exp(-0.5 * ((x - x0) / sigma) ** 2) * np.exp(1j * k * x)
        state = np.zeros((4, lat.nx), dtype=complex)
        state[0] = envelope
    else:  # eigenstate
        idx = int(sc.initial_state.get("index", 0))
        h = waveeq.dirac_hamiltonian(A, m, 0)
        _, vecs = np.linalg.eigh(h)
        state = vecs[:, idx].reshape(4, lat.nx)
    return _normalize(state, lat.dx)


def initial_scalar_slice(sc: Scenario, h: np.ndarray) -> np.ndarray:
    lat = sc.lattice
    preset = sc.initial_state["preset"]
    x = np.arange(lat.nx) * lat.dx
    if preset == "plane-wave":
        jx = int(sc.initial_state.get("jx", 1))
        state = np.exp(1j * lat.mode(jx, 1) * x)
    elif preset == "gaussian":
        x0 = float(sc.initial_state.get("x0", 0.5 * lat.nx * lat.dx))
        sigma = float(sc.initial_state.get("sigma", 0.1 * lat.nx * lat.dx))
        k = float(sc.initial_state.get("k", 2.0 * np.pi / (lat.nx * lat.dx)))
        state = np.exp(-0.5 * ((x - x0) / sigma) ** 2) * np.exp(1j * k * x)
    else:
        idx = int(sc.initial_state.get("index", 0))
        _, vecs = np.linalg.eigh(h)
        state = vecs[:, idx]
    return _normalize(state.astype(complex), lat.dx)


def initial_kg_state(sc: Scenario, m: float) -> np.ndarray:
    lat = sc.lattice
    preset = sc.initial_state["preset"]
    hbar, c = float(sc.constants["hbar"]), float(sc.constants["c"])
    mu = m * c / hbar
    x = np.arange(lat.nx) * lat.dx
    if preset == "plane-wave":
        jx = int(sc.initial_state.get("jx", 1))
        ptil = lat.mode_symbol(jx, 1)
        omega = np.sqrt(ptil * ptil + mu * mu)
        phi = np.exp(1j * lat.mode(jx, 1) * x)
        state = np.stack([phi, -1j * omega * phi])
    elif preset == "gaussian":
        x0 = float(sc.initial_state.get("x0", 0.5 * lat.nx * lat.dx))
        sigma = float(sc.initial_state.get("sigma", 0.1 * lat.nx * lat.dx))
        k = float(sc.initial_state.get("k", 2.0 * np.pi / (lat.nx * lat.dx)))
        phi = np.exp(-0.5 * ((x - x0) / sigma) ** 2) * np.exp(1j * k * x)
        state = np.stack([phi, np.zeros_like(phi)])
    else:
        raise ConfigError("eigenstate preset is not defined for the scalar families")
    return _normalize(state, lat.dx)


# -- method execution -------------------------------------------------------------

@dataclass
class MethodResult:
    name: str
    history: np.ndarray                 # (k, nt, nx), comparable across methods
    observables: dict[str, list[float]]
    residual: float | None = None


@dataclass
class RunReport:
    config: dict
    observables: dict
    residuals: dict
    deviations: dict
    timings: dict
    violations: list
    artifacts: dict

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": 1,
            "config": self.config,
            "observables": self.observables,
            "residuals": self.residuals,
            "deviations": self.deviations,
            "timings": self.timings,
            "violations": self.violations,
            "artifacts": self.artifacts,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "RunReport":
        raw = json.loads(Path(path).read_text())
        return cls(raw["config"], raw["observables"], raw["residuals"],
                   raw["deviations"], raw["timings"], raw["violations"],
                   raw.get("artifacts", {}))


def _norm_series(hist: np.ndarray, dx: float) -> list[float]:
    return [float(np.linalg.norm(hist[:, t]) * np.sqrt(dx)) for t in range(hist.shape[1])]


def _charge_series(hist: np.ndarray, dx: float) -> list[float]:
    return [waveeq.kg_charge(hist[:, t], dx) for t in range(hist.shape[1])]


def _interior_max(lat: Lattice, res: np.ndarray, margin: int = 1) -> float:
    mask = interior_time_mask(lat, margin)
    sl = res[..., mask, :] if res.ndim == 3 else res[mask, :]
    return float(np.max(np.abs(sl)))


def _run_dirac(sc: Scenario, budget_mb) -> tuple[list[MethodResult], dict]:
    lat = sc.lattice
    A = build_potential(sc)
    m = resolve_mass(sc)
    psi0 = initial_dirac_slice(sc, A, m)
    results = []
    timings = {}
    for meth in sc.methods:
        t0 = time.perf_counter()
        base = meth.split(":")[0]
        hist = np.empty((4,) + lat.shape, dtype=complex)
        hist[:, 0] = psi0
        if base == "direct":
            for t in range(1, lat.nt):
                hist[:, t] = waveeq.evolve_dirac(hist[:, t - 1], A, m, t - 1, t)
        elif base == "kernel":
            g = green.dirac_green(A, m)
            for t in range(1, lat.nt):
                hist[:, t] = green.apply_kernel(g, psi0, 0, t)
        elif base == "bundle":
            frame = build_frame(sc)
            bstate = np.einsum("xab,bx->ax", frame.linv[0], psi0)
            for t in range(1, lat.nt):
                bstate = waveeq.evolve_dirac_bundle(bstate, frame, A, m, t - 1, t)
                hist[:, t] = np.einsum("xab,bx->ax", frame.l[t], bstate)
        elif base == "born":
            niter = int(meth.split(":")[1]) if ":" in meth else 8
            g0 = green.dirac_green(waveeq.PotentialField.zero(
                lat, e=A.e, hbar=A.hbar, c=A.c), m)
            gb = green.born_iterate(g0, A, e=A.e, iterations=niter, budget_mb=budget_mb)
            for t in range(1, lat.nt):
                hist[:, t] = green.apply_kernel(gb, psi0, 0, t)
        obs = {"norm": _norm_series(hist, lat.dx)}
        res = _interior_max(lat, waveeq.dirac_residual(hist, A, m))
        results.append(MethodResult(meth, hist, obs, res))
        timings[meth] = time.perf_counter() - t0
    return results, timings


def _run_schrodinger(sc: Scenario, budget_mb) -> tuple[list[MethodResult], dict]:
    lat = sc.lattice
    A = build_potential(sc)
    m = resolve_mass(sc)
    hbar, c = A.hbar, A.c
    h = waveeq.schrodinger_hamiltonian(lat, m, A, hbar=hbar)
    psi0 = initial_scalar_slice(sc, h)
    step = waveeq.crank_nicolson_step_matrix(h, lat.dt / c, hbar)
    results = []
    timings = {}
    for meth in sc.methods:
        t0 = time.perf_counter()
        hist = np.empty((1,) + lat.shape, dtype=complex)
        hist[0, 0] = psi0
        if meth == "direct":
            for t in range(1, lat.nt):
                hist[0, t] = step @ hist[0, t - 1]
        elif meth == "kernel":
            g = green.schrodinger_green(h, lat, hbar=hbar, c=c)
            for t in range(1, lat.nt):
                hist[0, t] = green.apply_kernel(g, psi0, 0, t)
        obs = {"norm": _norm_series(hist, lat.dx)}
        results.append(MethodResult(meth, hist, obs, None))
        timings[meth] = time.perf_counter() - t0
    return results, timings


def _run_kg(sc: Scenario, budget_mb) -> tuple[list[MethodResult], dict]:
    lat = sc.lattice
    A = build_potential(sc)
    m = resolve_mass(sc)
    state0 = initial_kg_state(sc, m)
    results = []
    timings = {}
    direct_hist = None
    for meth in sc.methods:
        t0 = time.perf_counter()
        hist = np.empty((2,) + lat.shape, dtype=complex)
        hist[:, 0] = state0
        if meth == "direct":
            for t in range(1, lat.nt):
                hist[:, t] = waveeq.kg_two_component_step(hist[:, t - 1], A, m, lat.dt, t - 1)
            direct_hist = hist
        elif meth == "kernel":
            if sc.equation == "kg-2comp":
                g = green.kg_green_tilde(A, m)
                for t in range(1, lat.nt):
                    hist[:, t] = green.apply_kernel(g, state0, 0, t)
            else:  # kg-scalar: reconstruct phi through the scalar kernel
                if direct_hist is None:
                    raise ConfigError("kg-scalar kernel method needs 'direct' listed first "
                                      "(source slice data)")
                g = green.kg_green(A, m)
                hist[:, :2] = direct_hist[:, :2]
                for t in range(2, lat.nt):
                    hist[0, t] = green.kg_reconstruct(
                        g, direct_hist[0, 1], direct_hist[1, 1], A, 1, t)
                    hist[1, t] = direct_hist[1, t]
        obs = {"charge": _charge_series(hist, lat.dx)}
        res = _interior_max(lat, waveeq.kg_residual(hist[0], A, m), margin=2)
        results.append(MethodResult(meth, hist, obs, res))
        timings[meth] = time.perf_counter() - t0
    return results, timings


def _run_kg5(sc: Scenario, budget_mb) -> tuple[list[MethodResult], dict]:
    # whole-spacetime solution field; the comparison is between the plain
    # residual and the 5-component one
    lat = sc.lattice
    A = build_potential(sc)
    m = resolve_mass(sc)
    if sc.initial_state["preset"] != "plane-wave":
        raise ConfigError("kg-5comp scenarios use the plane-wave preset")
    jt = int(sc.initial_state.get("jt", 2))
    jx = int(sc.initial_state.get("jx", 1))
    t = np.arange(lat.nt) * lat.dt
    x = np.arange(lat.nx) * lat.dx
    phi = np.exp(-1j * (lat.mode(jt, 0) * t[:, None] - lat.mode(jx, 1) * x[None, :]))
    t0 = time.perf_counter()
    res_scalar = waveeq.kg_residual(phi, A, m)
    red = waveeq.kg_reduce_5(phi, A, m)
    res5 = waveeq.kg5_residual(red, A, m)
    hist5 = red.values
    obs = {"scalar_residual": [float(np.max(np.abs(res_scalar[tt])))
                               for tt in range(lat.nt)],
           "reduced_residual": [float(np.max(np.abs(res5[:, tt])))
                                for tt in range(lat.nt)]}
    result = MethodResult("direct", hist5, obs, float(np.max(np.abs(res5))))
    timings = {"direct": time.perf_counter() - t0}
    return [result], timings


_RUNNERS = {
    "dirac": _run_dirac,
    "schrodinger": _run_schrodinger,
    "kg-scalar": _run_kg,
    "kg-2comp": _run_kg,
    "kg-5comp": _run_kg5,
}


# -- artifacts ----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_observables_csv(path: Path, lat: Lattice, results: list[MethodResult]):
    names = []
    for r in results:
        for obs in sorted(r.observables):
            names.append((r.name, obs))
    with open(path, "w", newline="") as fh:
        fh.write("step,time," + ",".join(f"{m}.{o}" for m, o in names) + "\n")
        for t in range(lat.nt):
            row = [str(t), _fmt(t * lat.dt)]
            row += [_fmt(results_by(results, m).observables[o][t]) for m, o in names]
            fh.write(",".join(row) + "\n")


def results_by(results: list[MethodResult], name: str) -> MethodResult:
    return next(r for r in results if r.name == name)


def write_deviations_csv(path: Path, deviations: dict, tolerances: dict):
    with open(path, "w", newline="") as fh:
        fh.write("pair,max_deviation,tolerance,status\n")
        for pair in sorted(deviations):
            tol = _pair_tolerance(pair, tolerances)
            status = "ok" if tol is None or deviations[pair] <= tol else "violation"
            fh.write(f"{pair},{_fmt(deviations[pair])},"
                     f"{'' if tol is None else _fmt(tol)},{status}\n")


def _pair_tolerance(pair: str, tolerances: dict):
    """Gate only comparisons against the reference method; other pairs are
    recorded without a threshold."""
    a, b = pair.split("|")
    if "direct" not in (a, b):
        return None
    other = b if a == "direct" else a
    tol = tolerances.get(other.split(":")[0])
    return None if tol is None else float(tol)


def write_frame_matrices(path: Path, sc: Scenario, frame) -> None:
    """Serialize the resolved frame as complex matrices ([re, im] pairs)."""
    payload = {
        "preset": sc.frame,
        "shape": list(frame.l.shape),
        "matrices": [[[[ [float(v.real), float(v.imag)]
                         for v in row] for row in frame.l[it, ix]]
                      for ix in range(sc.lattice.nx)]
                     for it in range(sc.lattice.nt)],
    }
    path.write_text(json.dumps(payload, sort_keys=True))


def write_figures(outdir: Path, sc: Scenario, results: list[MethodResult]) -> list[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = sc.name
    made = []
    obs_names = sorted({o for r in results for o in r.observables})
    times = np.arange(sc.lattice.nt) * sc.lattice.dt
    for obs in obs_names:
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for r in results:
            if obs in r.observables:
                ax.plot(times, r.observables[obs], lw=1.2, label=r.name)
        ax.set_xlabel("time")
        ax.set_ylabel(obs)
        ax.set_title(f"{sc.name}: {obs} vs time")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        out = outdir / f"{obs}.svg"
        fig.savefig(out, metadata={"Date": None})
        plt.close(fig)
        made.append(out.name)
    return made


def run(sc: Scenario, outdir=None, plots: bool = True,
        budget_mb: float | None = None) -> RunReport:
    """Execute all requested methods, measure deviations, write artifacts."""
    t_setup = time.perf_counter()
    runner = _RUNNERS[sc.equation]
    results, method_timings = runner(sc, budget_mb)
    timings = {"setup": 0.0}
    timings.update(method_timings)
    timings["total"] = time.perf_counter() - t_setup

    deviations = {}
    for i, ra in enumerate(results):
        for rb in results[i + 1:]:
            dev = float(np.max(np.abs(ra.history - rb.history)))
            deviations[f"{ra.name}|{rb.name}"] = dev

    violations = []
    for pair, dev in sorted(deviations.items()):
        tol = _pair_tolerance(pair, sc.tolerances)
        if tol is not None and dev > tol:
            violations.append(f"deviation {pair} = {dev:.3e} exceeds {tol:.1e}")
    norm_tol = sc.tolerances.get("norm_drift")
    for r in results:
        if r.name.split(":")[0] not in ("direct", "kernel", "bundle"):
            continue  # approximate reconstructions are not norm-gated
        series = r.observables.get("norm")
        if series and norm_tol is not None:
            drift = max(abs(v - series[0]) for v in series)
            if drift > float(norm_tol) * max(abs(series[0]), 1e-30):
                violations.append(f"{r.name} norm drift {drift:.3e} "
                                  f"exceeds {float(norm_tol):.1e}")

    artifacts = {}
    if outdir is not None:
        outdir = Path(outdir) / sc.name
        outdir.mkdir(parents=True, exist_ok=True)
        t_io = time.perf_counter()
        write_observables_csv(outdir / "observables.csv", sc.lattice, results)
        write_deviations_csv(outdir / "deviations.csv", deviations, sc.tolerances)
        artifacts = {"observables": "observables.csv", "deviations": "deviations.csv"}
        if any(m.split(":")[0] == "bundle" for m in sc.methods):
            write_frame_matrices(outdir / "frame_matrices.json", sc, build_frame(sc))
            artifacts["frame_matrices"] = "frame_matrices.json"
        if plots:
            artifacts["figures"] = write_figures(outdir, sc, results)
        timings["write"] = time.perf_counter() - t_io

    report = RunReport(
        config=sc.resolved(),
        observables={r.name: r.observables for r in results},
        residuals={r.name: r.residual for r in results if r.residual is not None},
        deviations=deviations,
        timings=timings,
        violations=violations,
        artifacts=artifacts,
    )
    if outdir is not None:
        (outdir / "report.json").write_text(report.to_json())
    return report


# -- cross-run comparison --------------------------------------------------------------

def compare_reports(reports: list[RunReport]) -> list[dict]:
    """Convergence table from runs of one scenario family at several
    resolutions: log2 residual ratios between consecutive grids."""
    if not reports:
        raise ConfigError("no reports to compare")
    eqs = {r.config["equation"] for r in reports}
    if len(eqs) != 1:
        raise ConfigError(f"reports mix equation families {sorted(eqs)}")
    boxes = {(r.config["lattice"]["nt"] * r.config["lattice"]["dt"],
              r.config["lattice"]["nx"] * r.config["lattice"]["dx"]) for r in reports}
    if len(boxes) != 1:
        raise ConfigError("reports cover different physical boxes; "
                          "refine the lattice, keep the box")
    ordered = sorted(reports, key=lambda r: r.config["lattice"]["nt"])
    rows = []
    for coarse, fine in zip(ordered, ordered[1:]):
        keys = sorted(set(coarse.residuals) & set(fine.residuals))
        keys += [("dev", k) for k in sorted(set(coarse.deviations) & set(fine.deviations))]
        for key in keys:
            if isinstance(key, tuple):
                name = f"deviation[{key[1]}]"
                va, vb = coarse.deviations[key[1]], fine.deviations[key[1]]
            else:
                name = f"residual[{key}]"
                va, vb = coarse.residuals[key], fine.residuals[key]
            ratio = va / vb if vb else float("inf")
            rows.append({
                "metric": name,
                "nt_coarse": coarse.config["lattice"]["nt"],
                "nt_fine": fine.config["lattice"]["nt"],
                "coarse": va,
                "fine": vb,
                "abs_diff": abs(va - vb),
                "observed_order": float(np.log2(ratio)) if vb and va > 0 else 0.0,
            })
    return rows


def write_comparison_csv(path, rows: list[dict]):
    cols = ["metric", "nt_coarse", "nt_fine", "coarse", "fine", "abs_diff", "observed_order"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in cols) + "\n")
