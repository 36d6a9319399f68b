"""Straightforward implementations used as test oracles."""
from __future__ import annotations

import numpy as np

from dedt.committee import Committee, sign
from dedt.diversifier import (
    DiversifyResult,
    _member_streams,
    diverse_labels,
    draw_artificial,
    fit_empirical,
)


def brute_knn_score(features, labels, seq, query, k):
    d = ((features - query) ** 2).sum(axis=1)
    order = sorted(range(len(d)), key=lambda i: (d[i], seq[i]))[:k]
    return float(np.sum(labels[order])) / k


def naive_diversify(committee: Committee, samples, rng, *, m=80, m_prime=250, retries=10,
                    bag=True, artificial=True) -> DiversifyResult:
    C = len(committee)
    D = samples
    U = D.uncertain
    base_votes = sign(committee.member_scores(D.features))
    eps_base = float(np.mean(base_votes != D.labels[None, :]))
    if bag and len(U) == 0:
        return DiversifyResult(committee, eps_base, 0.0, [False] * C, [0] * C)
    if bag:
        size = min(m, len(U))
        members = []
        for mem in committee:
            rows = U[rng.choice(len(U), size=size, replace=False)]
            members.append(mem.extend(D.features[rows], D.labels[rows], D.t))
        prime = Committee(members)
    else:
        prime = committee
    if not artificial:
        return DiversifyResult(prime, eps_base, 0.0, [False] * C, [0] * C)
    model = fit_empirical(D.features)
    streams = _member_streams(rng, C)
    prime_votes = sign(prime.member_scores(D.features))
    out = list(prime.members)
    accepted, attempts = [False] * C, [0] * C
    for c in range(C):
        for attempt in range(1, retries + 1):
            attempts[c] = attempt
            A = draw_artificial(model, m_prime, streams[c])
            labels = diverse_labels(prime, A, streams[c])
            trial = prime[c].extend(A, labels, D.t)
            votes = prime_votes.copy()
            votes[c] = sign(trial.scores(D.features))
            if np.mean(votes != D.labels[None, :]) < eps_base:
                out[c] = trial
                accepted[c] = True
                break
    return DiversifyResult(Committee(out), eps_base, 0.0, accepted, attempts)


def naive_hog(patch, cell_size=8, bins=9, clip=0.2, eps=1e-6):
    """Loop-based HOG with the same layout conventions as the library."""
    P = patch.shape[0]
    cells = P // cell_size
    hist = np.zeros((cells, cells, bins))
    width = 180.0 / bins
    for r in range(P):
        for c in range(P):
            left = patch[r, max(c - 1, 0)]
            right = patch[r, min(c + 1, P - 1)]
            up = patch[max(r - 1, 0), c]
            down = patch[min(r + 1, P - 1), c]
            gx, gy = right - left, down - up
            mag = (gx * gx + gy * gy) ** 0.5
            ang = np.degrees(np.arctan2(gy, gx)) % 180.0
            pos = ang / width - 0.5
            lo = int(np.floor(pos))
            frac = pos - lo
            hist[r // cell_size, c // cell_size, lo % bins] += mag * (1 - frac)
            hist[r // cell_size, c // cell_size, (lo + 1) % bins] += mag * frac
    out = []
    for by in range(cells - 1):
        for bx in range(cells - 1):
            v = np.concatenate([hist[by, bx], hist[by, bx + 1], hist[by + 1, bx], hist[by + 1, bx + 1]])
            v = v / np.sqrt(np.sum(v ** 2) + eps ** 2)
            v = np.minimum(v, clip)
            v = v / np.sqrt(np.sum(v ** 2) + eps ** 2)
            out.append(v)
    return np.concatenate(out)


def naive_bilinear(img, box, P):
    """Per-pixel bilinear resample with edge replication (pixel-centre grid)."""
    H, W = img.shape
    x, y, w, h = box
    out = np.zeros((P, P))
    for i in range(P):
        for j in range(P):
            sx = min(max(x + (j + 0.5) * w / P - 0.5, 0.0), W - 1)
            sy = min(max(y + (i + 0.5) * h / P - 0.5, 0.0), H - 1)
            x0, y0 = int(np.floor(sx)), int(np.floor(sy))
            x1, y1 = min(x0 + 1, W - 1), min(y0 + 1, H - 1)
            fx, fy = sx - x0, sy - y0
            top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
            bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
            out[i, j] = top * (1 - fy) + bot * fy
    return out
