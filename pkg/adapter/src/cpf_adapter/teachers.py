"""Torch implementations of the externally trained teacher models.

Five architectures are supported with their published benchmark settings:
2-layer GAT with 8 attention heads, APPNP (2-layer MLP + 10 personalized-
propagation steps), GraphSAGE with the GCN-style mean aggregator and
neighbor sampling, a 16-layer GCNII, and GLP (low-pass filtered features
into an MLP, renormalization or auto-regressive filter). Each trains with
cross-entropy on the bundle's training nodes, early-stops on validation
accuracy, and emits per-node probability rows with training rows clamped
one-hot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import torch
import torch.nn as nn
import torch.nn.functional as F

from cpf_adapter.formats import Bundle


@dataclass
class TeacherSettings:
    name: str
    hidden: int
    lr: float
    wd: float
    dropout: float
    attn_dropout: float = 0.0
    heads: int = 8
    power_steps: int = 10
    teleport: float = 0.1
    sample_size: int = 5
    batch_size: int = 256
    layers: int = 16
    wd_dense: float = 0.0
    filter_k: int = 2
    filter_alpha: float = 10.0
    max_epochs: int = 500
    patience: int = 50


SETTINGS: dict[str, TeacherSettings] = {
    "gat": TeacherSettings(
        name="GAT", hidden=64, lr=0.01, wd=0.01, dropout=0.6, attn_dropout=0.3
    ),
    "appnp": TeacherSettings(name="APPNP", hidden=64, lr=0.01, wd=0.01, dropout=0.5),
    "sage": TeacherSettings(name="SAGE", hidden=128, lr=0.01, wd=0.0005, dropout=0.5),
    "gcnii": TeacherSettings(
        name="GCNII", hidden=64, lr=0.01, wd=0.0005, wd_dense=0.1, dropout=0.6
    ),
    "glp-rnm": TeacherSettings(name="GLP-RNM", hidden=16, lr=0.01, wd=0.0005, dropout=0.5),
    "glp-ar": TeacherSettings(name="GLP-AR", hidden=16, lr=0.01, wd=0.0005, dropout=0.5),
}


def directed_edges_with_self_loops(bundle: Bundle) -> torch.Tensor:
    """Both arc directions plus one self loop per node, as a (2, E') tensor."""
    e = bundle.edges
    src = np.concatenate([e[:, 0], e[:, 1], np.arange(bundle.num_nodes)])
    dst = np.concatenate([e[:, 1], e[:, 0], np.arange(bundle.num_nodes)])
    return torch.from_numpy(np.stack([src, dst])).long()


def normalized_adjacency_tensor(bundle: Bundle) -> torch.Tensor:
    """Sparse symmetric-normalized adjacency with self loops."""
    edge_index = directed_edges_with_self_loops(bundle)
    n = bundle.num_nodes
    deg = torch.zeros(n)
    deg.index_add_(0, edge_index[1], torch.ones(edge_index.shape[1]))
    inv_sqrt = deg.pow(-0.5)
    vals = inv_sqrt[edge_index[0]] * inv_sqrt[edge_index[1]]
    return torch.sparse_coo_tensor(
        edge_index, vals, (n, n), check_invariants=True
    ).coalesce()


def segment_softmax(scores: torch.Tensor, tgt: torch.Tensor, n: int) -> torch.Tensor:
    smax = torch.full((n, scores.shape[1]), -torch.inf)
    smax = smax.scatter_reduce(
        0, tgt[:, None].expand_as(scores), scores, reduce="amax", include_self=True
    )
    ex = torch.exp(scores - smax[tgt])
    denom = torch.zeros((n, scores.shape[1])).index_add_(0, tgt, ex)
    return ex / denom[tgt]


class GAT(nn.Module):
    def __init__(self, in_dim: int, num_classes: int, s: TeacherSettings):
        super().__init__()
        self.s = s
        self.head_dim = s.hidden // s.heads
        self.w1 = nn.Linear(in_dim, s.heads * self.head_dim, bias=False)
        self.a1_src = nn.Parameter(torch.empty(s.heads, self.head_dim))
        self.a1_dst = nn.Parameter(torch.empty(s.heads, self.head_dim))
        self.w2 = nn.Linear(s.hidden, num_classes, bias=False)
        self.a2_src = nn.Parameter(torch.empty(1, num_classes))
        self.a2_dst = nn.Parameter(torch.empty(1, num_classes))
        for p in (self.a1_src, self.a1_dst, self.a2_src, self.a2_dst):
            nn.init.xavier_uniform_(p)

    def _attend(self, h, edge_index, a_src, a_dst, heads, dim):
        src, dst = edge_index
        n = h.shape[0]
        hh = h.view(n, heads, dim)
        e = (hh * a_src).sum(-1)[src] + (hh * a_dst).sum(-1)[dst]
        attn = segment_softmax(F.leaky_relu(e, 0.2), dst, n)
        attn = F.dropout(attn, self.s.attn_dropout, self.training)
        out = torch.zeros((n, heads, dim))
        out.index_add_(0, dst, attn[:, :, None] * hh[src])
        return out.view(n, heads * dim)

    def forward(self, x, edge_index):
        x = F.dropout(x, self.s.dropout, self.training)
        h = self._attend(
            self.w1(x), edge_index, self.a1_src, self.a1_dst,
            self.s.heads, self.head_dim,
        )
        h = F.elu(h)
        h = F.dropout(h, self.s.dropout, self.training)
        return self._attend(
            self.w2(h), edge_index, self.a2_src, self.a2_dst, 1, self.w2.out_features
        )


class APPNP(nn.Module):
    def __init__(self, in_dim: int, num_classes: int, s: TeacherSettings, adj):
        super().__init__()
        self.s = s
        self.adj = adj
        self.fc1 = nn.Linear(in_dim, s.hidden)
        self.fc2 = nn.Linear(s.hidden, num_classes)

    def forward(self, x, edge_index=None):
        x = F.dropout(x, self.s.dropout, self.training)
        h = F.relu(self.fc1(x))
        h = F.dropout(h, self.s.dropout, self.training)
        h = self.fc2(h)
        z = h
        for _ in range(self.s.power_steps):
            z = (1 - self.s.teleport) * torch.sparse.mm(self.adj, z) + self.s.teleport * h
        return z


class SAGE(nn.Module):
    """GCN-style mean aggregator over a per-epoch sampled neighborhood."""

    def __init__(self, in_dim: int, num_classes: int, s: TeacherSettings, bundle: Bundle):
        super().__init__()
        self.s = s
        self.fc1 = nn.Linear(in_dim, s.hidden)
        self.fc2 = nn.Linear(s.hidden, num_classes)
        nbrs: list[list[int]] = [[] for _ in range(bundle.num_nodes)]
        for u, v in bundle.edges:
            nbrs[u].append(int(v))
            nbrs[v].append(int(u))
        self.neighbors = nbrs

    def sample_adjacency(self, generator: torch.Generator) -> torch.Tensor:
        """Mean over self plus at most `sample_size` sampled neighbors."""
        n = len(self.neighbors)
        src, dst, vals = [], [], []
        for v, nbrs in enumerate(self.neighbors):
            if len(nbrs) > self.s.sample_size:
                picks = torch.randperm(len(nbrs), generator=generator)[: self.s.sample_size]
                chosen = [nbrs[i] for i in picks.tolist()]
            else:
                chosen = list(nbrs)
            group = [v, *chosen]
            weight = 1.0 / len(group)
            for u in group:
                src.append(u)
                dst.append(v)
                vals.append(weight)
        idx = torch.tensor([src, dst])
        return torch.sparse_coo_tensor(
            torch.stack([idx[1], idx[0]]), torch.tensor(vals), (n, n),
            check_invariants=True,
        ).coalesce()

    def forward(self, x, adj):
        x = F.dropout(x, self.s.dropout, self.training)
        h = F.relu(self.fc1(torch.sparse.mm(adj, x)))
        h = F.dropout(h, self.s.dropout, self.training)
        return self.fc2(torch.sparse.mm(adj, h))


class GCNII(nn.Module):
    def __init__(self, in_dim: int, num_classes: int, s: TeacherSettings, adj):
        super().__init__()
        self.s = s
        self.adj = adj
        self.fc_in = nn.Linear(in_dim, s.hidden)
        self.fc_out = nn.Linear(s.hidden, num_classes)
        self.convs = nn.ModuleList(
            nn.Linear(s.hidden, s.hidden, bias=False) for _ in range(s.layers)
        )
        self.alpha = 0.1
        self.lam = 0.5

    def dense_parameters(self):
        return [*self.fc_in.parameters(), *self.fc_out.parameters()]

    def conv_parameters(self):
        return [p for conv in self.convs for p in conv.parameters()]

    def forward(self, x, edge_index=None):
        x = F.dropout(x, self.s.dropout, self.training)
        h0 = F.relu(self.fc_in(x))
        h = h0
        for i, conv in enumerate(self.convs, start=1):
            h = F.dropout(h, self.s.dropout, self.training)
            beta = float(np.log(self.lam / i + 1.0))
            support = (1 - self.alpha) * torch.sparse.mm(self.adj, h) + self.alpha * h0
            h = F.relu((1 - beta) * support + beta * conv(support))
        h = F.dropout(h, self.s.dropout, self.training)
        return self.fc_out(h)


class FilteredMLP(nn.Module):
    """MLP over pre-filtered features (both low-pass filter variants)."""

    def __init__(self, in_dim: int, num_classes: int, s: TeacherSettings):
        super().__init__()
        self.s = s
        self.fc1 = nn.Linear(in_dim, s.hidden)
        self.fc2 = nn.Linear(s.hidden, num_classes)

    def forward(self, x, edge_index=None):
        x = F.dropout(x, self.s.dropout, self.training)
        h = F.relu(self.fc1(x))
        h = F.dropout(h, self.s.dropout, self.training)
        return self.fc2(h)


def _scipy_adjacency(bundle: Bundle) -> sp.csr_matrix:
    e = bundle.edges
    n = bundle.num_nodes
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return sp.csr_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(n, n)
    )


def glp_filter_features(bundle: Bundle, variant: str, s: TeacherSettings) -> np.ndarray:
    """Low-pass filter the raw features before the MLP."""
    adj = _scipy_adjacency(bundle)
    n = bundle.num_nodes
    if variant == "glp-rnm":
        with_loops = adj + sp.eye(n)
        deg = np.asarray(with_loops.sum(axis=1)).ravel()
        inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
        norm = inv_sqrt @ with_loops @ inv_sqrt
        out = bundle.features
        for _ in range(s.filter_k):
            out = norm @ out
        return np.asarray(out)
    if variant == "glp-ar":
        deg = np.asarray(adj.sum(axis=1)).ravel()
        laplacian = sp.diags(deg) - adj
        system = (sp.eye(n) + s.filter_alpha * laplacian).tocsc()
        return sp.linalg.spsolve(system, bundle.features)
    raise ValueError(f"unknown filter variant {variant!r}")


def build_model(name: str, bundle: Bundle):
    """Instantiate the named teacher plus its fixed per-epoch inputs."""
    s = SETTINGS[name]
    x = torch.from_numpy(bundle.features).float()
    if name == "gat":
        model = GAT(bundle.features.shape[1], bundle.num_classes, s)
        aux = directed_edges_with_self_loops(bundle)
    elif name == "appnp":
        model = APPNP(
            bundle.features.shape[1], bundle.num_classes, s,
            normalized_adjacency_tensor(bundle),
        )
        aux = None
    elif name == "sage":
        model = SAGE(bundle.features.shape[1], bundle.num_classes, s, bundle)
        aux = None
    elif name == "gcnii":
        model = GCNII(
            bundle.features.shape[1], bundle.num_classes, s,
            normalized_adjacency_tensor(bundle),
        )
        aux = None
    elif name in ("glp-rnm", "glp-ar"):
        x = torch.from_numpy(glp_filter_features(bundle, name, s)).float()
        model = FilteredMLP(bundle.features.shape[1], bundle.num_classes, s)
        aux = None
    else:
        raise ValueError(f"unsupported teacher {name!r}")
    return model, s, x, aux


def _optimizer(model, name: str, s: TeacherSettings):
    if name == "gcnii":
        return torch.optim.Adam(
            [
                {"params": model.dense_parameters(), "weight_decay": s.wd_dense},
                {"params": model.conv_parameters(), "weight_decay": s.wd},
            ],
            lr=s.lr,
        )
    return torch.optim.Adam(model.parameters(), lr=s.lr, weight_decay=s.wd)


def train_external_teacher(
    name: str, bundle: Bundle, seed: int = 0, max_epochs: int | None = None
) -> np.ndarray:
    """Train one teacher on the bundle's own split; return clamped probs."""
    if name not in SETTINGS:
        raise ValueError(
            f"unsupported teacher {name!r}; supported: {', '.join(SETTINGS)}"
        )
    torch.manual_seed(seed)
    sampler = torch.Generator().manual_seed(seed + 1)
    model, s, x, aux = build_model(name, bundle)
    epochs = max_epochs if max_epochs is not None else s.max_epochs
    optimizer = _optimizer(model, name, s)
    labels = torch.from_numpy(bundle.labels).long()
    train_idx = torch.from_numpy(bundle.train).long()
    val_idx = torch.from_numpy(bundle.val).long()
    batch = max(1, s.batch_size)

    def current_inputs():
        if name == "sage":
            return model.sample_adjacency(sampler)
        return aux

    best_val, best_state, stale = -1.0, None, 0
    for epoch in range(epochs):
        model.train()
        inputs = current_inputs()
        perm = torch.randperm(train_idx.shape[0], generator=sampler)
        for start in range(0, train_idx.shape[0], batch):
            nodes = train_idx[perm[start : start + batch]]
            optimizer.zero_grad()
            logits = model(x, inputs)
            loss = F.cross_entropy(logits[nodes], labels[nodes])
            if not torch.isfinite(loss):
                raise RuntimeError(f"{name} diverged at epoch {epoch}")
            loss.backward()
            optimizer.step()
        model.eval()
        with torch.no_grad():
            logits = model(x, current_inputs())
            val_acc = float(
                (logits[val_idx].argmax(1) == labels[val_idx]).float().mean()
            )
        if val_acc > best_val:
            best_val = val_acc
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            stale = 0
        else:
            stale += 1
            if stale >= s.patience:
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    with torch.no_grad():
        probs = F.softmax(model(x, current_inputs()), dim=1).double().numpy()
    probs = probs / probs.sum(axis=1, keepdims=True)
    probs[bundle.train] = 0.0
    probs[bundle.train, bundle.labels[bundle.train]] = 1.0
    return probs
