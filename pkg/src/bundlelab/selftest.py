"""Acceptance checks, runnable as `bundlelab selftest` and mirrored by the
test suite.  Each criterion measures its stated tolerances and its runtime
budget and reports one pass/fail line."""
from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import green, scenarios, transport, waveeq
from .clifford import Metric, anticommutator, build_gamma5_set, build_gamma_set
from .lattice import Lattice, random_smooth_field
from .matrixop import (Chain, MatrixOperator, action_distance, matrix_of, odot)

_GS = build_gamma_set()
_G5 = build_gamma5_set()


@dataclass
class CheckResult:
    index: int
    name: str
    passed: bool
    details: str
    seconds: float
    budget: float | None

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        budget = f"/{self.budget:.0f}s" if self.budget else ""
        return f"{mark} [{self.index}] {self.name}: {self.details} ({self.seconds:.2f}s{budget})"


def _result(index, name, budget, started, ok, details) -> CheckResult:
    elapsed = time.perf_counter() - started
    if budget is not None and elapsed > budget:
        ok = False
        details += f"; runtime {elapsed:.1f}s over budget {budget:.0f}s"
    return CheckResult(index, name, ok, details, elapsed, budget)


# -- 1: gamma algebra ---------------------------------------------------------------

def criterion_1_clifford() -> CheckResult:
    started = time.perf_counter()
    eta = Metric().eta()
    ok = True
    for mu in range(4):
        for nu in range(4):
            expected = (2.0 * eta[mu, nu] * np.eye(4)).astype(complex)
            ok = ok and np.array_equal(anticommutator(_GS, mu, nu), expected)
    for mu in range(4):
        ok = ok and np.count_nonzero(_G5.gamma5[mu]) == 2
        for i in range(5):
            for j in range(5):
                want = 1.0 if (i, j) == (mu, 4) else (eta[mu, mu] if (i, j) == (4, mu) else 0.0)
                ok = ok and _G5.gamma5[mu, i, j] == want
    return _result(1, "gamma algebra", 1.0, started, ok,
                   "16 anticommutators exact; 5x5 component rule exact")


# -- 2: operator product ---------------------------------------------------------------

def _random_instance_operator(lat, rng, max_terms=2):
    entries = []
    for _ in range(4):
        row = []
        for _ in range(4):
            chains = []
            for _ in range(rng.integers(1, max_terms + 1)):
                kind = rng.integers(0, 4)
                scale = complex(rng.standard_normal(), rng.standard_normal())
                if kind == 0:
                    ops = ()
                elif kind == 1:
                    ops = (("mul", random_smooth_field(lat, rng)),)
                elif kind == 2:
                    ops = (("diff", int(rng.integers(0, 2))),)
                else:
                    ops = (("mul", random_smooth_field(lat, rng)),
                           ("diff", int(rng.integers(0, 2))))
                chains.append(Chain(scale, ops))
            row.append(tuple(chains))
        entries.append(row)
    return MatrixOperator(lat, 4, entries)


def _random_instance_frame(lat, rng, dense):
    from .matrixop import FrameMatrixField
    if dense:
        f = np.broadcast_to(np.eye(4, dtype=complex), lat.shape + (4, 4)).copy()
        for _ in range(3):
            mat = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            f += 0.08 * random_smooth_field(lat, rng)[..., None, None] * mat
    else:
        f = np.zeros(lat.shape + (4, 4), dtype=complex)
        for comp in range(4):
            f[..., comp, comp] = np.exp(1j * random_smooth_field(lat, rng, real=True))
    return FrameMatrixField(lat, f)


def criterion_2_matrixor() -> CheckResult:
    started = time.perf_counter()
    lat = Lattice(4, 16, 0.1, 0.2)
    rng = np.random.default_rng(2024)
    worst_assoc = 0.0
    worst_funct = 0.0
    for i in range(50):
        a = _random_instance_operator(lat, rng)
        b = _random_instance_operator(lat, rng)
        c = _random_instance_operator(lat, rng)
        worst_assoc = max(worst_assoc, action_distance(
            odot(odot(a, b), c), odot(a, odot(b, c)), rng, ntrials=1))
        frame = _random_instance_frame(lat, rng, dense=(i % 10 == 0))
        worst_funct = max(worst_funct, action_distance(
            matrix_of(odot(a, b), frame),
            odot(matrix_of(a, frame), matrix_of(b, frame)), rng, ntrials=1))
    ok = worst_assoc <= 1e-10 and worst_funct <= 1e-10
    return _result(2, "operator product", 5.0, started, ok,
                   f"assoc {worst_assoc:.2e}, frame functoriality {worst_funct:.2e} "
                   "(50 instances, tol 1e-10)")


# -- 3: transport laws ------------------------------------------------------------------

def criterion_3_transport() -> CheckResult:
    started = time.perf_counter()
    lat0 = Lattice(20, 20, 0.08, 0.08)
    frame = transport.random_smooth_frame(lat0, seed=6)
    tr = transport.make_transport(frame)
    rng = np.random.default_rng(3)
    worst_comp = 0.0
    worst_ident = 0.0
    for _ in range(100):
        sites = [(int(rng.integers(0, lat0.nt)), int(rng.integers(0, lat0.nx)))
                 for _ in range(3)]
        lhs = tr(sites[2], sites[1]) @ tr(sites[1], sites[0])
        rhs = tr(sites[2], sites[0])
        worst_comp = max(worst_comp, np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-30))
        worst_ident = max(worst_ident, np.max(np.abs(tr(sites[0], sites[0]) - np.eye(4))))
    laws_ok = worst_comp <= 1e-12 and worst_ident == 0.0

    def law_residual(lat):
        fr = transport.random_smooth_frame(lat, seed=6)
        trl = transport.make_transport(fr)
        coeffs = transport.coefficients(fr)
        field_y = trl.field_from((0, 0))
        worst = 0.0
        for mu in range(2):
            dl = lat.diff(field_y, mu, axes=(0, 1))
            rhs2 = -np.einsum("txab,txbc->txac", coeffs.gamma[mu], field_y)
            worst = max(worst, np.max(np.abs(dl - rhs2)))
        y_ref = (lat.nt // 2, lat.nx // 3)
        field_x = np.einsum("ab,txbc->txac", fr.linv[y_ref], fr.l)
        for mu in range(2):
            dl = lat.diff(field_x, mu, axes=(0, 1))
            rhs2 = np.einsum("txab,txbc->txac", field_x, coeffs.gamma[mu])
            worst = max(worst, np.max(np.abs(dl - rhs2)))
        return worst

    lat = lat0
    law_res = []
    for _ in range(4):
        law_res.append(law_residual(lat))
        lat = lat.refine()
    orders = [float(np.log2(a / b)) for a, b in zip(law_res, law_res[1:])]
    orders_ok = all(1.7 <= o <= 2.3 for o in orders)

    def annihilation(lat):
        fr = transport.random_smooth_frame(lat, seed=9)
        coeffs = transport.coefficients(fr)
        sec = transport.transported_section(fr, np.array([1.0, -0.5, 0.25j, 0.8]), (0, 0))
        return max(np.max(np.abs(transport.derivation_along(sec, coeffs, mu).values))
                   for mu in range(2))

    a1 = annihilation(lat0)
    a2 = annihilation(lat0.refine())
    annih_order = float(np.log2(a1 / a2))
    annih_ok = 1.7 <= annih_order <= 2.3

    ok = laws_ok and orders_ok and annih_ok
    return _result(3, "transport laws", 10.0, started, ok,
                   f"composition {worst_comp:.2e} (tol 1e-12); derivative-law orders "
                   f"{[f'{o:.2f}' for o in orders]}; annihilation order {annih_order:.2f}")


# -- 4: picture equivalence ---------------------------------------------------------------

def criterion_4_picture_equivalence() -> CheckResult:
    started = time.perf_counter()
    lat = Lattice(51, 16, 0.05, 0.2)
    m = 1.0
    rng = np.random.default_rng(4)
    psi0 = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
    psi0 /= np.linalg.norm(psi0)

    pots = {}
    pots["zero"] = waveeq.PotentialField.zero(lat, e=0.8)
    a = np.zeros((4,) + lat.shape)
    a[0] += 0.5
    pots["constant-a0"] = waveeq.PotentialField(lat, a, e=0.8)
    a = np.zeros((4,) + lat.shape)
    a[0] = 0.4 * random_smooth_field(lat, rng, real=True)
    a[1] = 0.3 * random_smooth_field(lat, rng, real=True)
    pots["smooth"] = waveeq.PotentialField(lat, a, e=0.8)

    frames = {name: transport.frame_from_preset(lat, name)
              for name in ("identity", "phase", "rotation", "shear", "random-smooth")}

    worst = 0.0
    for A in pots.values():
        for frame in frames.values():
            direct = waveeq.evolve_dirac(psi0, A, m, 0, 50)
            bundle0 = np.einsum("xab,bx->ax", frame.linv[0], psi0)
            bundle = waveeq.evolve_dirac_bundle(bundle0, frame, A, m, 0, 50)
            lifted = np.einsum("xab,bx->ax", frame.l[50], bundle)
            worst = max(worst, np.max(np.abs(lifted - direct)) / np.max(np.abs(direct)))
    ok = worst <= 1e-12
    return _result(4, "picture equivalence", 30.0, started, ok,
                   f"5 frames x 3 potentials, 50 steps: round-trip deviation {worst:.2e} "
                   "(tol 1e-12)")


# -- 5: kernel / evolution correspondence ----------------------------------------------------

def criterion_5_green_correspondence() -> CheckResult:
    started = time.perf_counter()
    lat = Lattice(16, 12, 0.08, 0.15)
    rng = np.random.default_rng(5)

    h = waveeq.schrodinger_hamiltonian(lat, m=1.0)
    gs = green.schrodinger_green(h, lat)
    worst_s = 0.0
    for tp, t in [(9, 2), (15, 0), (5, 5)]:
        expected = scipy.linalg.expm(-1j * h * (tp - t) * lat.dt)
        got = 1j * gs.block(tp, t) * lat.dx
        worst_s = max(worst_s, np.max(np.abs(got - expected)))

    a = np.zeros((4,) + lat.shape)
    a[0] = 0.4 * random_smooth_field(lat, rng, real=True)
    a[1] = 0.3 * random_smooth_field(lat, rng, real=True)
    A = waveeq.PotentialField(lat, a, e=0.7)
    m = 1.1
    gd = green.dirac_green(A, m)
    worst_d = 0.0
    for tp, t in [(9, 2), (15, 1), (6, 6)]:
        psi = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
        got = green.apply_kernel(gd, psi, t, tp)
        expected = waveeq.evolve_dirac(psi, A, m, t, tp)
        worst_d = max(worst_d, np.max(np.abs(got - expected)) / np.max(np.abs(expected)))

    retarded_ok = True
    for tp in range(0, lat.nt, 3):
        for t in range(tp + 1, lat.nt, 2):
            retarded_ok = retarded_ok and not np.any(gs.block(tp, t)) \
                and not np.any(gd.block(tp, t))

    ok = worst_s <= 1e-10 and worst_d <= 1e-12 and retarded_ok
    return _result(5, "kernel/evolution correspondence", 30.0, started, ok,
                   f"spectral vs exponential {worst_s:.2e} (tol 1e-10); "
                   f"spinor reconstruction {worst_d:.2e} (tol 1e-12); "
                   f"retardation exact: {retarded_ok}")


# -- 6: interacting kernel iteration ----------------------------------------------------------

def criterion_6_born() -> CheckResult:
    started = time.perf_counter()
    lat = Lattice(12, 12, 0.08, 0.15)
    rng = np.random.default_rng(6)
    a = np.zeros((4,) + lat.shape)
    a[0] = 0.4 * random_smooth_field(lat, rng, real=True)
    a[1] = 0.3 * random_smooth_field(lat, rng, real=True)
    a = np.broadcast_to(a[:, :1, :], a.shape).copy()
    A = waveeq.PotentialField(lat, a, e=1.0)
    m, e = 1.0, 0.08

    g0 = green.dirac_green(waveeq.PotentialField.zero(lat), m)
    fixed = np.array_equal(green.born_iterate(g0, A, e=0.0, iterations=3).materialize(),
                           g0.materialize())

    residuals = [green.born_residual(green.born_iterate(g0, A, e=0.05, iterations=n),
                                     g0, A, e=0.05)
                 for n in range(1, 6)]
    monotone = all(b < a for a, b in zip(residuals, residuals[1:]))

    gi = green.born_iterate(g0, A, e=e, iterations=25)
    gd = green.dirac_green(waveeq.PotentialField(lat, a, e=e), m)
    dev = float(np.max(np.abs(gi.materialize() - gd.materialize())))
    scale = float(np.max(np.abs(gd.materialize())))
    envelope = 0.1 * max(lat.dt, lat.dx)  # recorded: measured 0.0253 * max step
    within = dev / scale <= envelope

    ok = fixed and monotone and within
    return _result(6, "interacting kernel iteration", 60.0, started, ok,
                   f"zero-coupling fixed point exact: {fixed}; residuals monotone: "
                   f"{monotone}; vs direct kernel {dev / scale:.3f} "
                   f"(envelope {envelope:.3f})")


# -- 7: scalar-equation suite ------------------------------------------------------------------

def criterion_7_kg() -> CheckResult:
    started = time.perf_counter()
    lat = Lattice(16, 16, 0.08, 0.1)
    A = waveeq.PotentialField.zero(lat)
    rng = np.random.default_rng(7)
    t = np.arange(lat.nt) * lat.dt
    x = np.arange(lat.nx) * lat.dx

    worst_sol = 0.0
    worst_rel = 0.0
    count = 0
    jt, jx = 1, 0
    while count < 20:
        jx = (jx + 1) % (lat.nx // 4)
        jt = 1 + (jt % (lat.nt // 4))
        msq = lat.mode_symbol(jt, 0) ** 2 - lat.mode_symbol(jx, 1) ** 2
        if msq <= 1e-6:
            continue
        m = float(np.sqrt(msq))
        phi = np.exp(-1j * (lat.mode(jt, 0) * t[:, None] - lat.mode(jx, 1) * x[None, :]))
        res5 = waveeq.kg5_residual(waveeq.kg_reduce_5(phi, A, m), A, m)
        worst_sol = max(worst_sol, float(np.max(np.abs(res5))))
        res = waveeq.kg_residual(phi, A, m)
        worst_rel = max(worst_rel, float(np.max(np.abs(res5[4] + res))))
        count += 1

    ratio_ok = True
    for _ in range(20):
        phi = random_smooth_field(lat, rng)
        m = float(rng.uniform(0.5, 2.0))
        res = waveeq.kg_residual(phi, A, m)
        res5 = waveeq.kg5_residual(waveeq.kg_reduce_5(phi, A, m), A, m)
        ratio = np.linalg.norm(res5) / np.linalg.norm(res)
        ratio_ok = ratio_ok and 0.5 <= ratio <= 2.0 \
            and float(np.max(np.abs(res5[:4]))) <= 1e-12 * float(np.max(np.abs(res5)))

    def reconstruct_dev(lat2, scale):
        m = 1.0
        xs = np.arange(lat2.nx) * lat2.dx
        p = 2.0 * np.pi / (lat2.nx * lat2.dx)
        ptil = np.sin(p * lat2.dx) / lat2.dx
        om = np.sqrt(ptil * ptil + m * m)
        phi0 = np.exp(1j * p * xs)
        A2 = waveeq.PotentialField.zero(lat2)
        state = np.stack([phi0, -1j * om * phi0])
        hist = [state]
        for s in range(lat2.nt - 1):
            hist.append(waveeq.kg_two_component_step(hist[-1], A2, m, lat2.dt, s))
        # independent leapfrog oracle
        from .waveeq import _centered_diff_matrix
        dc = _centered_diff_matrix(lat2.nx, lat2.dx)
        lap = dc @ dc
        lhist = np.empty(lat2.shape, dtype=complex)
        lhist[0] = phi0
        lhist[1] = phi0 + lat2.dt * state[1] + 0.5 * lat2.dt ** 2 * (lap @ phi0 - m * m * phi0)
        for s in range(1, lat2.nt - 1):
            lhist[s + 1] = 2 * lhist[s] - lhist[s - 1] + lat2.dt ** 2 * (lap @ lhist[s] - m * m * lhist[s])
        g = green.kg_green(A2, m)
        ts, tp = scale, 14 * scale
        dphi = (lhist[ts + 1] - lhist[ts - 1]) / (2 * lat2.dt)
        got = green.kg_reconstruct(g, lhist[ts], dphi, A2, ts, tp)
        return float(np.max(np.abs(got - lhist[tp])) / np.max(np.abs(lhist[tp])))

    d1 = reconstruct_dev(Lattice(16, 12, 0.05, 0.2), 1)
    d2 = reconstruct_dev(Lattice(32, 24, 0.025, 0.1), 2)
    order = float(np.log2(d1 / d2))
    order_ok = 1.7 <= order <= 2.3

    lat8 = Lattice(8, 16, 0.05, 0.2)
    A8 = waveeq.PotentialField.zero(lat8)
    state = rng.standard_normal((2, lat8.nx)) + 1j * rng.standard_normal((2, lat8.nx))
    q0 = waveeq.kg_charge(state, lat8.dx)
    for _ in range(100):
        state = waveeq.kg_two_component_step(state, A8, 1.0, 1e-3)
    drift = abs(waveeq.kg_charge(state, lat8.dx) - q0) / abs(q0)
    drift_ok = drift <= 1e-6

    ok = worst_sol <= 1e-9 and worst_rel <= 1e-9 and ratio_ok and order_ok and drift_ok
    return _result(7, "scalar-equation suite", 30.0, started, ok,
                   f"20 solutions residual {worst_sol:.2e} (tol 1e-9); 20 non-solutions "
                   f"equivalent: {ratio_ok}; reconstruction order {order:.2f}; "
                   f"charge drift {drift:.2e} (tol 1e-6)")


# -- 8: conservation ------------------------------------------------------------------------------

def criterion_8_conservation() -> CheckResult:
    started = time.perf_counter()
    lat = Lattice(1001, 8, 0.05, 0.25)
    rng = np.random.default_rng(8)
    a = np.zeros((4,) + lat.shape)
    a[0] = np.broadcast_to(0.4 * random_smooth_field(lat, rng, real=True)[:1, :],
                           lat.shape).copy()
    A = waveeq.PotentialField(lat, a, e=0.9)
    psi = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
    psi /= np.linalg.norm(psi)
    out = waveeq.evolve_dirac(psi, A, 1.0, 0, 1000)
    drift = abs(np.linalg.norm(out) - 1.0)

    lat2 = Lattice(10, 10, 0.08, 0.15)
    g = green.dirac_green(waveeq.PotentialField.zero(lat2), 1.0)
    gm = green.green_morphism(g, transport.phase_frame(lat2))
    worst_norm = 0.0
    for tp, t in [(7, 2), (9, 0), (4, 4)]:
        n0 = np.linalg.norm(g.block(tp, t), 2)
        n1 = np.linalg.norm(gm.block(tp, t), 2)
        worst_norm = max(worst_norm, abs(n0 - n1) / n0)

    ok = drift <= 1e-12 and worst_norm <= 1e-12
    return _result(8, "unitarity and conservation", 20.0, started, ok,
                   f"1000-step norm drift {drift:.2e} (tol 1e-12); unitary-frame "
                   f"kernel-norm shift {worst_norm:.2e} (tol 1e-12)")


# -- 9: determinism --------------------------------------------------------------------------------

def criterion_9_determinism() -> CheckResult:
    started = time.perf_counter()
    raw = {
        "name": "determinism-probe",
        "equation": "dirac",
        "lattice": {"nt": 32, "nx": 16, "dt": 0.05, "dx": 0.2},
        "potential": {"preset": "smooth", "static": True},
        "initial_state": {"preset": "plane-wave", "jx": 1},
        "methods": ["direct", "kernel"],
        "constants": {"m": 1.0, "e": 0.6},
        "seed": 1234,
    }
    payloads = []
    for _ in range(2):
        sc = scenarios.Scenario.from_dict(raw)
        with tempfile.TemporaryDirectory() as tmp:
            scenarios.run(sc, outdir=tmp, plots=False)
            base = Path(tmp) / sc.name
            payloads.append(tuple((base / f).read_bytes()
                                  for f in ("observables.csv", "deviations.csv")))
    ok = payloads[0] == payloads[1]
    return _result(9, "determinism", None, started, ok,
                   "repeated run yields byte-identical CSV artifacts" if ok
                   else "CSV artifacts differ between identical runs")


CRITERIA = [
    criterion_1_clifford,
    criterion_2_matrixor,
    criterion_3_transport,
    criterion_4_picture_equivalence,
    criterion_5_green_correspondence,
    criterion_6_born,
    criterion_7_kg,
    criterion_8_conservation,
    criterion_9_determinism,
]


def run_selftest(indices: list[int] | None = None, stream=print) -> list[CheckResult]:
    results = []
    for i, fn in enumerate(CRITERIA, start=1):
        if indices and i not in indices:
            continue
        res = fn()
        results.append(res)
        if stream:
            stream(res.line())
    return results
