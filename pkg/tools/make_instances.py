"""Regenerate the JSON instances shipped in ``src/mcdeform/instances``."""
import json
from pathlib import Path

import numpy as np

from mcdeform.graded import AlgebraElement, direct_sum_embeddings, supercommutator
from mcdeform.hodge import build_hodge
from mcdeform.io import dump_base, dump_space, dump_terms, parse_instance
from mcdeform.samples import acyclic_extension, gl2_model, gl2_seed, unobstructed_model

OUT = Path(__file__).resolve().parent.parent / "src" / "mcdeform" / "instances"


def model_block(model):
    return {"base": dump_base(model.base), "space": dump_space(model.space),
            "connection": dump_terms(model.connection)}


def gl2_instance():
    model = gl2_model()
    comm = gl2_seed(model, np.diag([1.0, 2.0]), np.diag([3.0, -1.0]))
    noncomm = gl2_seed(model, np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]]))
    raw = model_block(model)
    raw["parameters"] = {"m": 1, "N": 6}
    raw["seeds"] = {"commuting": [dump_terms(comm)], "noncommuting": [dump_terms(noncomm)]}
    return raw


def unobstructed_instance(seed=11):
    rng = np.random.default_rng(seed)
    while True:
        model = unobstructed_model(rng, size=4)
        hp = build_hodge(model)
        basis = hp.harmonic_bases[1]
        dirs = [basis[:, 0], basis[:, -1] * 0.5 + basis[:, 0] * 0.25]
        seeds = [AlgebraElement(model.base, model.space, model.space, v.reshape(hp.dgla.shape), 1) for v in dirs]
        if supercommutator(seeds[0], seeds[0]).norm() > 1e-3:
            break
    raw = model_block(model)
    raw["parameters"] = {"m": 2, "N": 6}
    raw["seeds"] = {"harmonic": [dump_terms(x) for x in seeds]}
    return raw


def acyclic_instance():
    E, F, data, p, q = acyclic_extension()
    raw = model_block(F)
    raw["parameters"] = {"m": 1, "N": 4}
    raw["series"] = {"eta": {"coefficients": [{"index": [1], "terms": dump_terms(p + q)}]}}
    raw["homotopy"] = {"target": {"space": dump_space(E.space), "connection": dump_terms(E.connection)},
                       "phi": dump_terms(data.phi.body), "psi": dump_terms(data.psi.body),
                       "h": dump_terms(data.h.body)}
    # the acyclic summand has the same grading as E
    _, iE, _ = direct_sum_embeddings(E.space, E.space)
    m = np.zeros((F.space.dim, F.space.dim))
    m[iE[0], iE[0]] = 1.0
    v0 = F.connection.coeffs[F.base.unit]
    raw["family"] = {"m": 1, "N": 4, "connection": [
        {"form": "1|1", "end_degree": 1, "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in v0]},
        {"form": "1|tb1*dtb1", "end_degree": 0, "matrix": [[[float(z), 0.0] for z in row] for row in m]},
    ]}
    return raw


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, raw in [("gl2_lambda2", gl2_instance()), ("unobstructed_lambda1", unobstructed_instance()),
                      ("acyclic_transfer", acyclic_instance())]:
        parse_instance(raw)
        (OUT / f"{name}.json").write_text(json.dumps(raw, sort_keys=True, indent=1) + "\n")
        print("wrote", name)


if __name__ == "__main__":
    main()
