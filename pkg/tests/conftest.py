import time

import pytest

from porosurf import bench

# optimizer settings small enough for unit tests, still exercising both phases
TINY_OPT = dict(adamw_epochs=30, batch_fraction=0.25, lr0=1e-3,
                trunk_decay=0.99, branch_decay=0.98, decay_every=100,
                decay_per="iteration", weight_decay=1e-4,
                lbfgs_max_iter=40, lbfgs_tol=1e-10, lbfgs_memory=10,
                stop_tol=0.0)


def tiny_consolidation(sigma=1.0, n_train=12, n_test=4, m_data=8,
                       m_candidates=(4,), **extra):
    overrides = dict(n_train=n_train, n_test=n_test, m_data=m_data,
                     m_candidates=tuple(m_candidates),
                     optimizer=dict(TINY_OPT))
    overrides.update(extra)
    return bench.consolidation_spec(sigma, 0.25, 0.125, profile="desk",
                                    **overrides)


def tiny_subsidence(sigma=1.0, n_train=10, n_test=3, m_data=8,
                    m_candidates=(4,), **extra):
    overrides = dict(n_train=n_train, n_test=n_test, m_data=m_data,
                     m_candidates=tuple(m_candidates),
                     optimizer=dict(TINY_OPT))
    overrides.update(extra)
    return bench.subsidence_spec(sigma, 0.125, profile="desk", **overrides)


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """The three desk-scale consolidation studies the acceptance gate rests on.

    Shared session-wide because each takes minutes: the sigma=1.5 run feeds
    criteria 4/7/8, sigma=0.5 feeds 8, and sigma=0 feeds 11.
    """
    runs = {}
    for name, sigma in (("sigma15", 1.5), ("sigma05", 0.5), ("sigma0", 0.0)):
        spec = bench.consolidation_spec(sigma, 0.25, 0.125, profile="desk")
        out = tmp_path_factory.mktemp(f"desk_{name}")
        t0 = time.perf_counter()
        report = bench.run_pipeline(spec, out, seed=101, train_seed=11)
        runs[name] = {"spec": spec, "report": report, "dir": out,
                      "seconds": time.perf_counter() - t0}
    return runs
