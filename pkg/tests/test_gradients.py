"""Autograd against central finite differences on small random instances."""
import pytest
import torch

from infodemic.encoder import DTYPE, SAGELayer, cross_attention, diffpool
from infodemic.model import MLP, cvp_refine, predict_graph_heads, predict_vulnerability, readout_sum, rumor_loss, \
    virality_loss, vulnerability_loss

from conftest import fd_relative_error

INSTANCES = range(20)
TOL = 1e-4
MODES = ("undirected", "top_down", "bottom_up", "bidirectional")


def _gen(seed):
    g = torch.Generator().manual_seed(seed)
    n_u = int(torch.randint(1, 6, (1,), generator=g))
    n_p = int(torch.randint(1, 7, (1,), generator=g))
    d = int(torch.randint(1, 5, (1,), generator=g))
    return g, n_u, n_p, d


def _leaf(*shape, g):
    return torch.randn(*shape, generator=g, dtype=DTYPE).requires_grad_(True)


def _graph(n, g):
    flow = (torch.rand(n, n, generator=g) < 0.4).to(DTYPE)
    flow.fill_diagonal_(0)
    adj = ((flow + flow.T) > 0).to(DTYPE)
    return adj, flow


def _seeded_layer(seed, *args, **kwargs):
    torch.manual_seed(seed)
    return SAGELayer(*args, **kwargs)


@pytest.mark.parametrize("seed", INSTANCES)
def test_cross_attention_gradient(seed):
    g, n_u, n_p, d = _gen(seed)
    x_u, x_p = _leaf(n_u, d, g=g), _leaf(n_p, 2 * d, g=g)
    w_q, w_k, w_v = _leaf(d, d, g=g), _leaf(2 * d, d, g=g), _leaf(2 * d, d, g=g)
    proj = torch.randn(n_u, d, generator=g, dtype=DTYPE)
    err = fd_relative_error(lambda: (cross_attention(x_u, x_p, w_q, w_k, w_v) * proj).sum(), [x_u, x_p, w_q, w_k, w_v])
    assert err <= TOL


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("seed", INSTANCES)
def test_sage_layer_gradient(seed, mode):
    g, n_u, _, d = _gen(seed)
    layer = _seeded_layer(seed, d, d + 1, mode=mode)
    x = _leaf(n_u, d, g=g)
    adj, flow = _graph(n_u, g)
    proj = torch.randn(n_u, d + 1, generator=g, dtype=DTYPE)
    params = [x] + list(layer.parameters())
    assert fd_relative_error(lambda: (layer(x, adj, flow) * proj).sum(), params) <= TOL


@pytest.mark.parametrize("seed", INSTANCES)
def test_diffpool_gradient(seed):
    g, n_u, _, d = _gen(seed)
    k = int(torch.randint(1, 6, (1,), generator=g))
    assign = _seeded_layer(seed, d, k, activation=False)
    x = _leaf(n_u, d, g=g)
    adj, _ = _graph(n_u, g)
    pe = torch.randn(k, d, generator=g, dtype=DTYPE)
    pa = torch.randn(k, k, generator=g, dtype=DTYPE)

    def fn():
        pooled = diffpool(x, adj, assign)
        return (pooled.embeddings * pe).sum() + (pooled.adjacency * pa).sum()

    assert fd_relative_error(fn, [x] + list(assign.parameters())) <= TOL


@pytest.mark.parametrize("seed", INSTANCES)
def test_cvp_refine_gradient(seed):
    g, n_u, _, d = _gen(seed)
    k = int(torch.randint(1, 6, (1,), generator=g))
    layer = _seeded_layer(seed, 2 * d, d)
    x2, x_c = _leaf(n_u, d, g=g), _leaf(k, d, g=g)
    logits = _leaf(n_u, k, g=g)
    adj, _ = _graph(n_u, g)
    proj = torch.randn(n_u, d, generator=g, dtype=DTYPE)

    def fn():
        c = torch.softmax(logits, dim=1)
        return (cvp_refine(x2, c, x_c, adj, layer) * proj).sum()

    assert fd_relative_error(fn, [x2, x_c, logits] + list(layer.parameters())) <= TOL


def _mlp(seed, d, out):
    torch.manual_seed(seed)
    return MLP(d, d, out)


@pytest.mark.parametrize("seed", INSTANCES)
def test_graph_heads_gradient(seed):
    g, _, _, d = _gen(seed)
    k = int(torch.randint(1, 6, (1,), generator=g))
    rumor, vir = _mlp(seed, d, 2), _mlp(seed + 1000, d, 1)
    x_c = _leaf(k, d, g=g)
    w = torch.randn(2, generator=g, dtype=DTYPE)

    def rumor_fn():
        return (predict_graph_heads(readout_sum(x_c), rumor, vir)[0] * w).sum()

    def vir_fn():
        return predict_graph_heads(readout_sum(x_c), rumor, vir)[1].sum()

    assert fd_relative_error(rumor_fn, [x_c] + list(rumor.parameters())) <= TOL
    assert fd_relative_error(vir_fn, [x_c] + list(vir.parameters())) <= TOL


@pytest.mark.parametrize("seed", INSTANCES)
def test_vulnerability_head_gradient(seed):
    g, n_u, _, d = _gen(seed)
    mlp = _mlp(seed, d, 1)
    x4 = _leaf(n_u, d, g=g)
    w = torch.randn(n_u, generator=g, dtype=DTYPE)
    assert fd_relative_error(lambda: (predict_vulnerability(x4, mlp) * w).sum(), [x4] + list(mlp.parameters())) <= TOL


class _Target:
    def __init__(self, rumor, vir, target, mask):
        self.rumor_target, self.virality_target = rumor, vir
        self.vuln_target, self.vuln_mask = target, mask


@pytest.mark.parametrize("seed", INSTANCES)
def test_loss_gradients(seed):
    g, n_u, _, _ = _gen(seed)
    mask = torch.rand(n_u, generator=g) < 0.7
    mask[0] = True
    s = _Target(int(torch.randint(0, 2, (1,), generator=g)), float(torch.rand(1, generator=g) * 8),
                torch.rand(n_u, generator=g, dtype=DTYPE), mask)
    logits, pred = _leaf(2, g=g), _leaf((), g=g)
    raw = _leaf(n_u, g=g)
    assert fd_relative_error(lambda: rumor_loss(logits, s), [logits]) <= TOL
    assert fd_relative_error(lambda: virality_loss(pred, s), [pred]) <= TOL
    assert fd_relative_error(lambda: vulnerability_loss(torch.sigmoid(raw), s)[0], [raw]) <= TOL
