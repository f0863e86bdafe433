import math

import numpy as np
import pytest
import torch

from infodemic.data import NON_RUMOR, RUMOR, derive_labels, observe_prefix
from infodemic.encoder import DTYPE, SAGELayer
from infodemic.features import build_sample, build_samples, normalized_times
from infodemic.model import (
    MLP,
    ModelConfig,
    MultiTaskModel,
    cvp_refine,
    init_model,
    predict_graph_heads,
    predict_vulnerability,
    readout_sum,
    rumor_loss,
    virality_loss,
    vulnerability_loss,
)
from infodemic.pretrain import UserEmbeddingTable
from infodemic.text import HashingTextEncoder

from conftest import make_event


def t(x):
    return torch.tensor(x, dtype=DTYPE)


def set_mlp(mlp, w1, b1, w2, b2):
    with torch.no_grad():
        mlp.fc1.weight.copy_(t(w1))
        mlp.fc1.bias.copy_(t(b1))
        mlp.fc2.weight.copy_(t(w2))
        mlp.fc2.bias.copy_(t(b2))


# -- readout and graph heads ---------------------------------------------------

def test_readout_sum_cases():
    assert torch.equal(readout_sum(torch.zeros(50, 4, dtype=DTYPE)), torch.zeros(4, dtype=DTYPE))
    onehot = torch.zeros(50, 3, dtype=DTYPE)
    onehot[torch.arange(50), torch.arange(50) % 3] = 1
    assert torch.equal(readout_sum(onehot), t([17, 17, 16]))
    x = np.random.default_rng(0).standard_normal((50, 4))
    expected = [sum(x[r, c] for r in range(50)) for c in range(4)]
    assert np.allclose(readout_sum(t(x)).numpy(), expected, atol=1e-12)


def test_graph_heads_zero_weights_give_biases():
    rumor, vir = MLP(3, 3, 2), MLP(3, 3, 1)
    set_mlp(rumor, np.zeros((3, 3)), np.zeros(3), np.zeros((2, 3)), [0.3, -0.2])
    set_mlp(vir, np.zeros((3, 3)), np.zeros(3), np.zeros((1, 3)), [4.5])
    for g in (t([1.0, -2.0, 3.0]), torch.zeros(3, dtype=DTYPE)):
        logits, v = predict_graph_heads(g, rumor, vir)
        assert torch.equal(logits, t([0.3, -0.2]))
        assert v.item() == 4.5


def test_graph_heads_tiny_mlp_by_hand():
    rumor, vir = MLP(2, 2, 2), MLP(2, 2, 1)
    set_mlp(rumor, [[1, 0], [1, -1]], [0, 0.5], [[1, 1], [-1, 2]], [0, 1])
    set_mlp(vir, [[2, 1], [0, -1]], [-1, 0], [[0.5, 3]], [0.25])
    g = t([1.0, 2.0])
    # rumor hidden: relu([1, 1 - 2 + 0.5]) = [1, 0]; logits [1, -1 + 1]
    # virality hidden: relu([2 + 2 - 1, -2]) = [3, 0]; output 1.5 + 0.25
    logits, v = predict_graph_heads(g, rumor, vir)
    assert torch.allclose(logits, t([1.0, 0.0]), atol=1e-9, rtol=0)
    assert abs(v.item() - 1.75) <= 1e-9


def test_virality_head_is_unsquashed():
    vir = MLP(1, 1, 1)
    set_mlp(vir, [[1.0]], [0.0], [[10.0]], [0.0])
    _, v = predict_graph_heads(t([5.0]), MLP(1, 1, 2), vir)
    assert v.item() == 50.0


# -- community-enhanced refinement -----------------------------------------------

def test_cvp_uniform_assignment_gives_shared_mixture():
    m = t([1.0, -2.0, 0.5])
    x_c = m.expand(50, -1)
    c = torch.full((4, 50), 1 / 50, dtype=DTYPE)
    layer = SAGELayer(6, 3, activation=False)
    with torch.no_grad():
        layer.lin.weight.zero_()
        layer.lin.weight[:, 3:6] = torch.eye(3, dtype=DTYPE)
        layer.lin.bias.zero_()
    out = cvp_refine(torch.randn(4, 3, dtype=DTYPE), c, x_c, torch.zeros(4, 4, dtype=DTYPE), layer)
    assert torch.allclose(out, m.expand(4, -1), atol=1e-12)


def test_cvp_hard_assignment_picks_community_row():
    x_c = torch.randn(50, 2, dtype=DTYPE)
    c = torch.zeros(3, 50, dtype=DTYPE)
    c[0, 7] = c[1, 0] = c[2, 49] = 1
    layer = SAGELayer(4, 2, activation=False)
    with torch.no_grad():
        layer.lin.weight.zero_()
        layer.lin.weight[:, 2:4] = torch.eye(2, dtype=DTYPE)
        layer.lin.bias.zero_()
    out = cvp_refine(torch.zeros(3, 2, dtype=DTYPE), c, x_c, torch.zeros(3, 3, dtype=DTYPE), layer)
    assert torch.equal(out, x_c[[7, 0, 49]])


def test_cvp_three_users_against_numpy():
    rng = np.random.default_rng(3)
    x2 = rng.standard_normal((3, 2))
    c = rng.random((3, 4))
    c /= c.sum(1, keepdims=True)
    x_c = c.T @ x2
    adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    w, b = rng.standard_normal((2, 8)), rng.standard_normal(2)
    layer = SAGELayer(4, 2)
    with torch.no_grad():
        layer.lin.weight.copy_(t(w))
        layer.lin.bias.copy_(t(b))
        out = cvp_refine(t(x2), t(c), t(x_c), t(adj), layer)
    x3 = np.hstack([x2, c @ x_c])
    nbr = adj @ x3 / adj.sum(1, keepdims=True)
    expected = np.maximum(np.hstack([x3, nbr]) @ w.T + b, 0)
    assert np.allclose(out.numpy(), expected, atol=1e-9, rtol=0)


# -- vulnerability head --------------------------------------------------------

def test_vulnerability_zero_weights_gives_sigmoid_bias():
    mlp = MLP(3, 3, 1)
    set_mlp(mlp, np.zeros((3, 3)), np.zeros(3), np.zeros((1, 3)), [0.7])
    out = predict_vulnerability(torch.randn(5, 3, dtype=DTYPE), mlp)
    assert torch.allclose(out, torch.full((5,), 1 / (1 + math.exp(-0.7)), dtype=DTYPE))


def test_vulnerability_identical_rows_identical_scores():
    mlp = MLP(4, 4, 1)
    x = torch.randn(1, 4, dtype=DTYPE).repeat(3, 1)
    out = predict_vulnerability(x, mlp)
    assert out[0] == out[1] == out[2]


def test_vulnerability_one_hidden_unit_by_hand():
    mlp = MLP(2, 1, 1)
    set_mlp(mlp, [[1.0, -1.0]], [0.5], [[2.0]], [-1.0])
    out = predict_vulnerability(t([[3.0, 1.0], [0.0, 4.0]]), mlp)
    # hidden relu(3 - 1 + 0.5) = 2.5 -> 5 - 1 = 4; hidden relu(-3.5) = 0 -> -1
    expected = [1 / (1 + math.exp(-4.0)), 1 / (1 + math.exp(1.0))]
    assert torch.allclose(out, t(expected), atol=1e-12, rtol=0)


# -- losses ----------------------------------------------------------------------

class _S:
    def __init__(self, rumor=1, vir=3.0, target=None, mask=None):
        self.rumor_target, self.virality_target = rumor, vir
        self.vuln_target, self.vuln_mask = target, mask


def test_rumor_loss_is_cross_entropy():
    logits = t([0.2, 1.3])
    expected = -math.log(math.exp(1.3) / (math.exp(0.2) + math.exp(1.3)))
    assert abs(rumor_loss(logits, _S(rumor=1)).item() - expected) < 1e-12


def test_virality_loss_is_squared_error():
    assert virality_loss(t(5.0), _S(vir=3.0)).item() == 4.0


def test_vulnerability_loss_only_counts_labeled_users():
    s = _S(target=t([0.5, 0.0, 1.0]), mask=torch.tensor([True, False, True]))
    loss, n = vulnerability_loss(t([0.7, 0.9, 0.4]), s)
    assert n == 2
    assert abs(loss.item() - (0.2 ** 2 + 0.6 ** 2) / 2) < 1e-12


def test_vulnerability_loss_without_labels_is_constant_zero():
    scores = torch.rand(3, dtype=DTYPE, requires_grad=True)
    loss, n = vulnerability_loss(scores, _S(target=torch.zeros(3, dtype=DTYPE), mask=torch.zeros(3, dtype=torch.bool)))
    assert n == 0 and loss.item() == 0.0 and not loss.requires_grad


# -- features and the full model -------------------------------------------------

def _corpus():
    e1 = make_event("e1", RUMOR, [("a", None, "A"), ("b", "a", "B"), ("c", "a", "C"), ("d", "b", "A")],
                    times=[0, 2, 4, 10], texts=["shocking leaked", "omg", "share", "wow"])
    e2 = make_event("e2", NON_RUMOR, [("f", None, "A"), ("g", "f", "D")], texts=["official", "check"])
    e3 = make_event("e3", RUMOR, [("h", None, "B"), ("i", "h", "E")])
    return [e1, e2, e3]


def test_sample_tensors_and_targets():
    events = _corpus()
    labels = derive_labels(events)
    table = UserEmbeddingTable(["A", "B"], np.eye(4)[:2])
    enc = HashingTextEncoder(dim=4)
    s = build_sample(observe_prefix(events[0], 0.5), table, enc, labels)
    assert s.users == ("A", "B", "C")
    assert torch.equal(s.user_x0[0], t([1, 0, 0, 0]))
    assert torch.allclose(s.user_x0[2], t(table.fallback))
    assert torch.allclose(s.post_time, t([0.0, 0.4, 0.8]))
    assert s.rumor_target == 1 and s.virality_target == math.log2(3)
    assert s.vuln_mask.tolist() == [True, True, False]
    assert torch.allclose(s.vuln_target, t([0.5, 1.0, 0.0]))
    assert s.labeled_users == 2
    assert normalized_times(observe_prefix(events[0], 1.0)).tolist() == [0.0, 0.2, 0.4, 1.0]


def test_model_forward_shapes_and_ranges():
    events = _corpus()
    labels = derive_labels(events)
    table = UserEmbeddingTable(["A", "B"], np.eye(8)[:2])
    samples = build_samples(events, 1.0, table, HashingTextEncoder(dim=8), labels)
    model = init_model(ModelConfig(dim=8, n_communities=5), seed=0)
    for s in samples:
        preds, inter = model(s)
        assert preds.rumor_logits.shape == (2,)
        assert preds.virality.ndim == 0
        assert preds.vulnerability.shape == (len(s.users),)
        assert bool(((preds.vulnerability > 0) & (preds.vulnerability < 1)).all())
        assert 0.0 < preds.rumor_probability() < 1.0
        assert model.user_representations(s).shape == (len(s.users), 8)


def test_init_model_is_seeded_and_leaves_global_rng_alone():
    torch.manual_seed(42)
    before = torch.get_rng_state()
    a, b = init_model(ModelConfig(dim=4), 3), init_model(ModelConfig(dim=4), 3)
    assert torch.equal(before, torch.get_rng_state())
    for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert ka == kb and torch.equal(va, vb)


def test_model_rejects_multiple_layers():
    with pytest.raises(ValueError):
        MultiTaskModel(ModelConfig(layers=2))
