"""Plain numpy forward passes of tiny hand-set models.

Weights follow a fixed fill rule over the tensors in file order:
value_k = ((k * 7919) % 200 - 100) / 250 for a global element counter k.
The printed probabilities are pasted into test_model.cpp / test_lstm.cpp.
"""

import math

import numpy as np


def filler(shapes):
    k = 0
    out = {}
    for name, (r, c) in shapes:
        m = np.zeros((r, c))
        for i in range(r):
            for j in range(c):
                m[i, j] = ((k * 7919) % 200 - 100) / 250.0
                k += 1
        out[name] = m
    return out


def pe(pos, d):
    row = np.zeros(d)
    for i in range(d):
        rate = 10000.0 ** (-(i - i % 2) / d)
        row[i] = math.sin(pos * rate) if i % 2 == 0 else math.cos(pos * rate)
    return row


def layer_norm(x, g, b):
    mu = x.mean()
    var = ((x - mu) ** 2).mean()
    return (x - mu) / math.sqrt(var + 1e-5) * g + b


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def transformer(tokens, vocab=4, d=2, ffn=3):
    shapes = [("embedding", (vocab, d))]
    for n in ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"]:
        shapes.append((n, (d, d) if n[0] == "w" else (1, d)))
    shapes += [("ln1_gain", (1, d)), ("ln1_bias", (1, d)), ("ffn_w1", (d, ffn)), ("ffn_b1", (1, ffn)),
               ("ffn_w2", (ffn, d)), ("ffn_b2", (1, d)), ("ln2_gain", (1, d)), ("ln2_bias", (1, d)),
               ("head_w", (d, 7)), ("head_b", (1, 7))]
    p = filler(shapes)
    L = len(tokens)
    x = np.array([p["embedding"][t] * math.sqrt(d) + pe(i, d) for i, t in enumerate(tokens)])
    q = x @ p["wq"] + p["bq"]
    k = x @ p["wk"] + p["bk"]
    v = x @ p["wv"] + p["bv"]
    s = q @ k.T / math.sqrt(d)
    a = np.exp(s - s.max(axis=1, keepdims=True))
    a /= a.sum(axis=1, keepdims=True)
    att = (a @ v) @ p["wo"] + p["bo"]
    y1 = np.array([layer_norm(x[i] + att[i], p["ln1_gain"][0], p["ln1_bias"][0]) for i in range(L)])
    h = np.maximum(y1 @ p["ffn_w1"] + p["ffn_b1"], 0.0)
    f = h @ p["ffn_w2"] + p["ffn_b2"]
    y2 = np.array([layer_norm(y1[i] + f[i], p["ln2_gain"][0], p["ln2_bias"][0]) for i in range(L)])
    pooled = y2.mean(axis=0)
    return sigmoid(pooled @ p["head_w"] + p["head_b"][0]), a


def lstm(tokens, vocab=4, d=2, hidden=3):
    shapes = [("embedding", (vocab, d)), ("wx", (d, 4 * hidden)), ("wh", (hidden, 4 * hidden)),
              ("b", (1, 4 * hidden)), ("head_w", (hidden, 7)), ("head_b", (1, 7))]
    p = filler(shapes)
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    for t, tok in enumerate(tokens):
        x = p["embedding"][tok] * math.sqrt(d) + pe(t, d)
        z = x @ p["wx"] + h @ p["wh"] + p["b"][0]
        i = sigmoid(z[0:hidden])
        f = sigmoid(z[hidden:2 * hidden])
        g = np.tanh(z[2 * hidden:3 * hidden])
        o = sigmoid(z[3 * hidden:4 * hidden])
        c = f * c + i * g
        h = o * np.tanh(c)
    return sigmoid(h @ p["head_w"] + p["head_b"][0])


if __name__ == "__main__":
    probs, attn = transformer([1, 3])
    print("transformer", ", ".join("%.12f" % x for x in probs))
    print("attention", attn.tolist())
    print("lstm", ", ".join("%.12f" % x for x in lstm([1, 3])))
