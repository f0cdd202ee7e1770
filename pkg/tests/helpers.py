"""Shared test machinery: reference pipelines and corpus generation."""

import numpy as np

from blochwave import (
    bloch_effective_evolution,
    build_frame,
    closed_form_wave,
    identity_ic,
    integrate_riccati,
    propagate,
    radon_wave,
    random_smooth_model,
)


class PipelineBundle:
    """One model pushed through frame -> M -> all wave-operator routes."""

    def __init__(self, model, t0, t1, n_checkpoints=101, tol=1e-10, ic=None):
        self.model = model
        self.t0 = t0
        self.t1 = t1
        self.tol = tol
        self.frame = build_frame(model, t0, t1, tol=tol)
        self.blocks = self.frame.blocks
        self.grid = np.linspace(t0, t1, n_checkpoints)
        self.m_path = propagate(self.frame.hamiltonian_at, t0, self.grid, tol=tol)
        self.ic = ic if ic is not None else identity_ic(self.blocks)
        self.u_riccati = integrate_riccati(
            self.frame.hamiltonian_at, self.ic, self.blocks, t0, self.grid, tol=tol
        )
        self.u_closed = closed_form_wave(self.m_path, self.ic, self.blocks)
        self.u_radon = radon_wave(self.m_path, self.ic, self.blocks)
        self.m_eff = bloch_effective_evolution(self.m_path, self.ic, self.blocks)

    @property
    def routes(self):
        return {
            "riccati": self.u_riccati,
            "closed_form": self.u_closed,
            "radon": self.u_radon,
        }

    def route_disagreement(self):
        paths = list(self.routes.values())
        worst = 0.0
        for i in range(len(paths)):
            for j in range(i + 1, len(paths)):
                n = min(len(paths[i].times), len(paths[j].times))
                worst = max(
                    worst,
                    max(
                        np.linalg.norm(a - b, 2)
                        for a, b in zip(paths[i].matrices[:n], paths[j].matrices[:n])
                    ),
                )
        return worst


def make_corpus(n_models, seed0=100, analytic=True):
    """Deterministic corpus of small perturbative random models
    (4 to 6 dimensions, two or three blocks)."""
    models = []
    rng = np.random.default_rng(seed0)
    for i in range(n_models):
        dim = int(rng.integers(4, 7))
        n_blocks = int(rng.integers(2, 4))
        models.append(
            random_smooth_model(
                dim,
                n_blocks,
                seed=seed0 + i,
                gamma=float(rng.uniform(8.0, 16.0)),
                drive_strength=float(rng.uniform(0.5, 1.5)),
                analytic=analytic,
            )
        )
    return models


def write_tabulated(path, model, times):
    """Write a model's drift/drive samples in the tabulated CSV format."""
    dim = model.dim
    header = (
        ["time"]
        + [f"B_{i}{j}" for i in range(dim) for j in range(dim)]
        + [f"C_{i}{j}" for i in range(dim) for j in range(dim)]
    )
    lines = [",".join(header)]
    for t in times:
        row = [repr(float(t))]
        row += [str(complex(x)) for x in model.drift(t).ravel()]
        row += [str(complex(x)) for x in model.drive(t).ravel()]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
