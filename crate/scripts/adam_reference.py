"""Scalar Adam on f(w) = w^2, written out from the update equations.

Prints one line per step: step index and the parameter after that step,
formatted with repr() so every digit is kept.
"""

import math
import sys


def main(steps=5, w=1.0, lr=0.1, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    print("# step w")
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** float(t))
        v_hat = v / (1.0 - b2 ** float(t))
        w = w - lr * m_hat / (math.sqrt(v_hat) + eps)
        print(t, repr(w))


if __name__ == "__main__":
    main(*(float(a) for a in sys.argv[1:]))
