"""Reference full-batch softmax regression on the 4-point toy set.

Used to freeze expected values in tests/trainer_test.cpp. Plain numpy, no
shared code with the C++ trainer.
"""
import numpy as np

# features (dim 4) and labels; class 0 uses feature 0, class 1 uses feature 1,
# feature 2 is shared noise.
X = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 1.0, 1.0, 0.0],
])
y = np.array([0, 0, 1, 1])
L = 2
W = np.zeros((4, L))
b = np.zeros(L)
lr, epochs, l2 = 0.5, 50, 0.0


def probs(W, b):
    z = X @ W + b
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


for epoch in range(epochs):
    p = probs(W, b)
    g = p.copy()
    g[np.arange(4), y] -= 1.0
    g /= 4.0
    W = W - lr * (X.T @ g + l2 * W)
    b = b - lr * g.sum(axis=0)
    if epoch == 0:
        print("epoch 1:", f"{probs(W, b)[0, 0]:.17g}")

p = probs(W, b)
print(f"epoch {epochs}:")
for i in range(4):
    print(f"{p[i, y[i]]:.17g}")
