import numpy as np
import pytest
import torch

from infodemic.data import parse_event

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, name: str, passed, detail: str = "") -> None:
    """``passed`` is True, False or None (criterion not applicable in this run)."""
    status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
    line = f"criterion {number} [{status}] {name}"
    if detail:
        line += f": {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def fd_relative_error(fn, params, step: float = 1e-5) -> float:
    """Relative error between autograd and central differences for scalar ``fn()``.

    ``params`` are float64 leaf tensors with ``requires_grad``.  The error is
    ``||g_auto - g_fd|| / max(||g_auto||, ||g_fd||, 1e-12)`` over all entries.
    """
    for p in params:
        p.grad = None
    out = fn()
    analytic = torch.autograd.grad(out, params, allow_unused=True)
    analytic = [torch.zeros_like(p) if g is None else g for p, g in zip(params, analytic)]
    numeric = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                up = fn().item()
                flat[i] = orig - step
                down = fn().item()
                flat[i] = orig
                gflat[i] = (up - down) / (2 * step)
            numeric.append(g)
    a = torch.cat([g.reshape(-1) for g in analytic])
    n = torch.cat([g.reshape(-1) for g in numeric])
    return float(torch.linalg.norm(a - n) / max(float(torch.linalg.norm(a)), float(torch.linalg.norm(n)), 1e-12))


def make_event(event_id, label, edges, times=None, texts=None):
    """``edges`` is a list of (post_id, parent_id, user_id); times default to the list index."""
    posts = []
    for i, (pid, parent, user) in enumerate(edges):
        posts.append({"post_id": pid, "parent_id": parent, "user_id": user,
                      "ts": float(i if times is None else times[i]),
                      "text": "" if texts is None else texts[i]})
    return parse_event({"event_id": event_id, "label": label, "posts": posts})


@pytest.fixture
def rng():
    return np.random.default_rng(0)
