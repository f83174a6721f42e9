"""A walking tour of the numpy engine.

Builds the desk stack on 8x8 inputs, inspects its shapes, trains it for a
few dozen Adam steps on the digit task, and spot-checks one analytic
gradient coordinate against a central finite difference.
"""

import numpy as np

from fedd2s import losses, models, nn, optim
from fedd2s.data import synth_digits

spec = models.desk_spec(classes=10, input_shape=(8, 8, 1))
print(f"desk stack on 8x8x1, {nn.count_params(spec)} parameters")
for i, (layer, shape) in enumerate(zip(spec.layers, nn.layer_shapes(spec)[1:]), start=1):
    print(f"  layer {i}: {type(layer).__name__:<8} -> {shape}")

ds = synth_digits(per_class=20, noise=0.25, seed=0)
params = nn.init_params(spec, np.random.default_rng(0))
opt = optim.adam_init(params)

print("\ntraining on 200 digit images, full-batch Adam:")
for step in range(61):
    logits, trace = nn.forward_trace(spec, params, ds.x)
    loss, dlog = losses.cross_entropy_grad(logits, ds.y)
    if step % 15 == 0:
        acc = float((logits.argmax(axis=1) == ds.y).mean())
        print(f"  step {step:>2}  loss {loss:.3f}  train acc {acc:.2f}")
    grads, _ = nn.backward(spec, params, trace, dlog)
    params, opt = optim.adam_step(params, grads, opt, lr=0.01)

# one coordinate of the analytic gradient vs a central difference
logits, trace = nn.forward_trace(spec, params, ds.x[:16])
_, dlog = losses.cross_entropy_grad(logits, ds.y[:16])
grads, _ = nn.backward(spec, params, trace, dlog)
w = params[0].w
h = 1e-5
old = w[0, 0, 0, 0]
w[0, 0, 0, 0] = old + h
up = losses.cross_entropy(nn.forward(spec, params, ds.x[:16]), ds.y[:16])
w[0, 0, 0, 0] = old - h
dn = losses.cross_entropy(nn.forward(spec, params, ds.x[:16]), ds.y[:16])
w[0, 0, 0, 0] = old
fd = (up - dn) / (2 * h)
print(f"\nfirst conv weight gradient: analytic {grads[0].w[0, 0, 0, 0]:+.6f}, "
      f"finite difference {fd:+.6f}")
