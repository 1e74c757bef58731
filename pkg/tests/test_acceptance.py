"""One test per acceptance criterion; each prints a PASS/FAIL line with the measured errors."""
import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

import mcdeform
from mcdeform.base import build_exterior, build_point
from mcdeform.cli import main
from mcdeform.deform import (MCSeries, gauge_act, hol_params, kodaira_spencer, kuranishi_map, residual_pieces,
                             mc_residual, slice_normalize, solve_kuranishi)
from mcdeform.graded import AlgebraElement, compose, supercommutator, supertrace
from mcdeform.hodge import ScalarHodge, build_hodge
from mcdeform.samples import acyclic_extension, gl2_model, gl2_seed, random_degree_element, random_model
from mcdeform.transfer import (deformed_connection, dtb_part, family_d, family_from_series, intertwining_defect,
                               mc_eval, regularize, regularize_morphism, transfer_mc)

from helpers import (conjugated_family, model_with_harmonic_seeds, projection_family, pure_gauge, random_gauge,
                     random_transfer_case, regularization_errors, unobstructed_case)
from oracles import form_degrees, product_table, rho, unrho

RESULTS = []
N_MODELS = 50


def record(number, title, checks):
    """``checks`` is a list of ``(label, measured, bound)``; prints and returns the verdict."""
    ok = all(v <= b for _, v, b in checks)
    detail = "; ".join(f"{lab} {v:.2e} <= {b:.0e}" if v <= b else f"{lab} {v:.2e} > {b:.0e}"
                       for lab, v, b in checks)
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"
    print(line)
    RESULTS.append(line)
    return ok


def opnorm(a):
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def maxabs(a):
    return float(np.abs(a).max(initial=0.0))


def small_base(rng):
    g = int(rng.integers(0, 4))
    return build_exterior(g) if g else build_point()


@pytest.fixture(scope="module")
def models():
    rng = np.random.default_rng(7)
    out = []
    while len(out) < N_MODELS:
        m = random_model(rng, base=small_base(rng), size=int(rng.integers(2, 7)))
        if m.space.dim <= 6:
            out.append(m)
    return out


def rank_nullity_dims(L):
    dims = {}
    M = L.matrix
    for k in L.degrees():
        rows, cols = L.indices(k + 1), L.indices(k)
        into = L.indices(k - 1)
        r_out = np.linalg.matrix_rank(M[np.ix_(rows, cols)], tol=1e-9) if rows.size and cols.size else 0
        r_in = np.linalg.matrix_rank(M[np.ix_(cols, into)], tol=1e-9) if into.size and cols.size else 0
        dims[k] = int(cols.size - r_out - r_in)
    return dims


def test_criterion_1_axioms(models):
    rng = np.random.default_rng(1)
    sq = jac = leib = assoc = 0.0
    for m in models:
        L = m.dgla
        sq = max(sq, maxabs(L.matrix @ L.matrix))
        dx, dy, dz = (int(k) for k in rng.integers(-1, 2, 3))
        x, y, z = (random_degree_element(rng, m.base, m.space, m.space, k) for k in (dx, dy, dz))
        lhs = supercommutator(x, supercommutator(y, z))
        rhs = supercommutator(supercommutator(x, y), z) + supercommutator(y, supercommutator(x, z)) * (-1) ** (dx * dy)
        jac = max(jac, maxabs(lhs.coeffs - rhs.coeffs))
        lhs = L.d(supercommutator(x, y))
        rhs = supercommutator(L.d(x), y) + supercommutator(x, L.d(y)) * (-1) ** dx
        leib = max(leib, maxabs(lhs.coeffs - rhs.coeffs))
        assoc = max(assoc, maxabs(compose(compose(x, y), z).coeffs - compose(x, compose(y, z)).coeffs))
    assert record(1, f"axioms on {len(models)} models", [("d^2", sq, 1e-10), ("Jacobi", jac, 1e-10),
                                                         ("Leibniz", leib, 1e-10), ("associativity", assoc, 1e-10)])


def test_criterion_2_hodge(models):
    rng = np.random.default_rng(2)
    ident = comm_d = comm_ds = ortho = 0.0
    dims_ok = True
    for m in models:
        hp = build_hodge(m)
        n = hp.H.shape[0]
        ident = max(ident, opnorm(hp.H + hp.box @ hp.G - np.eye(n)))
        comm_d = max(comm_d, opnorm(hp.G @ hp.d - hp.d @ hp.G))
        comm_ds = max(comm_ds, opnorm(hp.G @ hp.dstar - hp.dstar @ hp.G))
        x = random_degree_element(rng, m.base, m.space, m.space, int(rng.integers(-1, 2)))
        a, b, c = hp.decompose(x)
        scale = 1 + x.norm() ** 2
        ortho = max(ortho, max(abs(hp.inner(p, q)) / scale for p, q in ((a, b), (a, c), (b, c))))
        dims_ok &= hp.harmonic_dims == rank_nullity_dims(m.dgla)
    assert record(2, "Hodge identities", [("id-H-boxG", ident, 1e-9), ("[G,d]", comm_d, 1e-9),
                                         ("[G,d*]", comm_ds, 1e-9), ("orthogonality", ortho, 1e-9),
                                         ("dim mismatch", 0.0 if dims_ok else 1.0, 0.0)])


def test_criterion_3_kuranishi():
    rng = np.random.default_rng(3)
    ku = dstar = 0.0
    for m in (1, 1, 1, 2, 2):
        model, hp, beta = model_with_harmonic_seeds(rng, m, 6)
        alpha, _ = solve_kuranishi(beta, hp)
        ku = max(ku, (kuranishi_map(alpha, hp) - beta).max_norm())
        dstar = max(dstar, MCSeries(model, alpha.params, hp.apply(hp.dstar, alpha.element)).max_norm())
    # solved direction: residual and all three pieces vanish
    model, hp, beta = unobstructed_case(rng, 2, 6)
    alpha, _ = solve_kuranishi(beta, hp)
    solved = max([mc_residual(alpha).max_norm()] + [p.max_norm() for p in residual_pieces(alpha, hp)])
    # corrupted direction: a nonzero residual shows up in at least one piece
    model = random_model(rng, base=build_exterior(2), size=3)
    hp = build_hodge(model)
    good = pure_gauge(rng, model, hol_params(1, 4))
    good_pieces = max(p.max_norm() for p in residual_pieces(good, hp))
    bump = random_degree_element(rng, model.base, model.space, model.space, 1)
    bad = good + MCSeries.from_coefficients(model, good.params, {(2,): bump})
    bad_res = mc_residual(bad).max_norm()
    bad_pieces = max(p.max_norm() for p in residual_pieces(bad, hp))
    both = 0.0 if bad_res > 1e-6 and bad_pieces > 1e-6 else 1.0
    assert record(3, "Kuranishi contract", [("ku(alpha)-beta", ku, 1e-10), ("d*alpha", dstar, 1e-10),
                                           ("solved pieces", max(solved, good_pieces), 1e-9),
                                           ("corrupted not detected", both, 0.0)])


def test_criterion_4_gl2_obstruction():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([[0.0, 0.0], [1.0, 0.0]])
    model = gl2_model()
    hp = build_hodge(model)
    s = MCSeries.linear(model, hol_params(1, 4), [gl2_seed(model, a, b)])
    alpha, ob = solve_kuranishi(s, hp)
    entry = ob.entry((2,)).coeffs
    # documented normalization: H[alpha, alpha] at t^2 is 2 th1 th2 (x) [a, b]
    want = np.zeros((4, 2, 2), dtype=complex)
    want[model.base.index("th1^th2")] = 2 * (a @ b - b @ a)
    closed = maxabs(entry - want)
    tb = alpha.tbase
    op = rho(alpha.element, product_table(tb, 1, 4), form_degrees(tb))
    brute = unrho(2 * op @ op, tb, model.space, model.space).reshape(4, 5, 2, 2)[:, 2]
    oracle = maxabs(entry - brute)
    verdict = 0.0 if ob.verdict() == "obstructed at |I|=2" else 1.0
    c = MCSeries.linear(model, hol_params(1, 6), [gl2_seed(model, np.diag([1.0, 2.0]), np.diag([3.0, -1.0]))])
    calpha, cob = solve_kuranishi(c, hp)
    comm = max(mc_residual(calpha).max_norm(), cob.max_norm())
    assert record(4, "gl2 obstruction", [("closed form", closed, 1e-10), ("brute force", oracle, 1e-10),
                                        ("verdict", verdict, 0.0), ("commuting residual", comm, 0.0)])


def test_criterion_5_unobstructed():
    rng = np.random.default_rng(5)
    ob_max = res_max = 0.0
    for m in (1, 1, 1, 2, 2, 2):
        model, hp, beta = unobstructed_case(rng, m, 6)
        assert hp.harmonic_dims.get(2, 0) == 0
        alpha, ob = solve_kuranishi(beta, hp)
        ob_max = max(ob_max, ob.max_norm())
        res_max = max(res_max, mc_residual(alpha).max_norm())
    assert record(5, "unobstructed instances", [("obstruction", ob_max, 1e-9), ("residual", res_max, 1e-9)])


def test_criterion_6_transfer():
    E, F, data, p, q = acyclic_extension()
    eta = MCSeries.linear(F, hol_params(1, 4), [p + q])
    eps, _ = transfer_mc(eta, data)
    # only t^2 survives: -1 from E^0 to E^1
    got = np.stack([eps.coefficient((k,)).coeffs for k in range(1, 5)])
    want = np.zeros_like(got)
    want[1, 0, 1, 0] = -1.0
    closed = maxabs(got - want)
    res = inter = agree = 0.0
    for seed in range(20):
        E, F, data, eta = random_transfer_case(100 + seed, m=1 + seed % 2, order=4 if seed % 2 == 0 else 3)
        eps, phi_t = transfer_mc(eta, data)
        res = max(res, mc_residual(eps).max_norm())
        inter = max(inter, intertwining_defect(phi_t, deformed_connection(eta), deformed_connection(eps)))
        agree = max(agree, (mc_eval(data, eta) - eps).max_norm())
    assert record(6, "perturbation transfer", [("closed form", closed, 1e-10), ("eps residual", res, 1e-9),
                                              ("intertwining", inter, 1e-9), ("mc_eval", agree, 1e-10)])


def test_criterion_7_gauge():
    rng = np.random.default_rng(7)
    keep = trip = ks_inv = ks_lin = 0.0
    for _ in range(5):
        model = random_model(rng, base=small_base(rng), size=3)
        params = hol_params(1, 5)
        alpha = pure_gauge(rng, model, params)
        keep = max(keep, mc_residual(gauge_act(random_gauge(rng, model, params), alpha)).max_norm())
    for _ in range(3):
        model, hp, beta = unobstructed_case(rng, 2, 5)
        alpha, _ = solve_kuranishi(beta, hp)
        moved = gauge_act(random_gauge(rng, model, alpha.params, 0.2), alpha)
        u, back = slice_normalize(moved, hp)
        trip = max(trip, MCSeries(model, back.params, hp.apply(hp.dstar, back.element)).max_norm())
        v = rng.standard_normal(2)
        ks = kodaira_spencer(alpha, hp, v)
        ks_inv = max(ks_inv, maxabs(kodaira_spencer(moved, hp, v).coeffs - ks.coeffs))
        lin = v[0] * beta.coefficient((1, 0)).coeffs + v[1] * beta.coefficient((0, 1)).coeffs
        ks_lin = max(ks_lin, maxabs(ks.coeffs - lin))
    assert record(7, "gauge coherence", [("gauge keeps MC", keep, 1e-8), ("slice round trip", trip, 1e-8),
                                        ("KS invariance", ks_inv, 1e-9), ("KS linear part", ks_lin, 1e-12)])


def test_criterion_8_families():
    rng = np.random.default_rng(8)
    irr = conj = start = 0.0
    fams = [projection_family()] + [conjugated_family(rng, 1, order)[1] for order in (2, 3, 4, 4, 4)]
    for fam in fams:
        J, reg = regularize(fam)
        e = regularization_errors(fam, J, reg)
        irr = max(irr, e[0], e[1])
        conj = max(conj, e[2])
        start = max(start, e[3])
    model, hp, beta = unobstructed_case(rng, 1, 4)
    alpha, _ = solve_kuranishi(beta, hp)
    fam = family_from_series(alpha)
    J, reg = regularize(fam)
    one = np.zeros_like(J.coeffs)
    one[fam.tbase.unit] = np.eye(fam.space.dim)
    ident = maxabs(J.coeffs - one)
    B = fam.connection
    gamma0 = random_degree_element(rng, fam.tbase, fam.space, fam.space, -1, 0.3)
    theta = family_d(gamma0, B, B)
    theta = AlgebraElement(fam.tbase, fam.space, fam.space, theta.coeffs + one, 0)
    out, gamma = regularize_morphism(theta, fam, fam)
    closed = family_d(out, B, B).norm()
    free = dtb_part(out, 1).norm()
    cob = maxabs((out - theta - family_d(gamma, B, B)).coeffs)
    assert record(8, "family normalization", [("irregularity/flatness", irr, 1e-9), ("conjugation", conj, 1e-12),
                                             ("J(0)-id", start, 0.0), ("J on regular", ident, 0.0),
                                             ("morphism closed", closed, 1e-9), ("morphism dtb", free, 0.0),
                                             ("coboundary", cob, 1e-12)])


def test_criterion_9_supertrace(models):
    rng = np.random.default_rng(9)
    comm = proj = 0.0
    for m in models:
        dx, dy = (int(k) for k in rng.integers(-1, 2, 2))
        x = random_degree_element(rng, m.base, m.space, m.space, dx)
        y = random_degree_element(rng, m.base, m.space, m.space, dy)
        comm = max(comm, maxabs(supertrace(supercommutator(x, y))))
        hp = build_hodge(m)
        sh = ScalarHodge(m.base)
        z = random_degree_element(rng, m.base, m.space, m.space, int(rng.integers(-1, 3)))
        proj = max(proj, maxabs(supertrace(hp.harmonic_project(z)) - sh.project(supertrace(z))))
    obs = 0.0
    for m in (1, 1, 2):
        model, hp, beta = model_with_harmonic_seeds(rng, m, 4)
        _, ob = solve_kuranishi(beta, hp)
        for a in ob.norms:
            obs = max(obs, maxabs(supertrace(ob.entry(a))))
    model = gl2_model()
    s = MCSeries.linear(model, hol_params(1, 4), [gl2_seed(model, np.array([[0.0, 1], [0, 0]]),
                                                          np.array([[0.0, 0], [1, 0]]))])
    _, ob = solve_kuranishi(s, build_hodge(model))
    obs = max(obs, max(maxabs(supertrace(ob.entry(a))) for a in ob.norms))
    assert record(9, "supertrace", [("str of brackets", comm, 1e-12), ("str H - H_Omega str", proj, 1e-9),
                                   ("str of obstructions", obs, 1e-10)])


def test_criterion_10_cli():
    inst = Path(mcdeform.__file__).parent / "instances"
    paths = [str(inst / f"{n}.json") for n in ("gl2_lambda2", "unobstructed_lambda1", "acyclic_transfer")]
    runs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            out = Path(tmp) / str(k)
            for cmd in ("check", "cohomology", "solve", "transfer", "regularize"):
                main([cmd, *paths, "--out-dir", str(out)])
            runs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.report.json"))})
        verdicts = {}
        for seed in ("noncommuting", "commuting"):
            main(["solve", paths[0], "--seed", seed, "--out-dir", tmp])
            verdicts[seed] = json.loads((Path(tmp) / "gl2_lambda2.solve.report.json").read_text())["verdict"]
        main(["solve", paths[1], "--out-dir", tmp])
        verdicts["unobstructed"] = json.loads((Path(tmp) / "unobstructed_lambda1.solve.report.json").read_text())["verdict"]
    differ = sum(runs[0][n] != runs[1].get(n) for n in runs[0]) + abs(len(runs[0]) - 15)
    want = {"noncommuting": "obstructed at |I|=2", "commuting": "unobstructed through order 6",
            "unobstructed": "unobstructed through order 6"}
    wrong = sum(verdicts[k] != v for k, v in want.items())
    assert record(10, "CLI determinism", [("differing reports", float(differ), 0.0),
                                         ("wrong verdicts", float(wrong), 0.0)])
