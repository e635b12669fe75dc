"""
Swapping the oracle for a small trained network
===============================================

Train a one-hidden-layer noise predictor by plain SGD, watch it approach the
optimal denoiser, then drive the whole pipeline with it. Takes ~20 s.
"""

import numpy as np

from anchorvid.config import PipelineConfig
from anchorvid.pipeline import build_context, run_mode

cfg = PipelineConfig().replace(pipeline={"denoiser": "learned"})
ctx = build_context(cfg)

rep = ctx.train_reports["video"]
print(f"gradient check max relative error: {rep.grad_check_error:.1e}")
print(f"zero-predictor loss {rep.zero_predictor_loss:.1f}")
print("epoch  held-out loss  ||eps_hat - eps*||^2")
for e, (loss, gap) in enumerate(zip(rep.epoch_losses, rep.oracle_gaps)):
    print(f"{e:<6} {loss:13.2f}  {gap:10.2f}")

for mode in ("baseline", "full"):
    res = run_mode(cfg, mode, 0, ctx)
    m = res.metrics
    print(f"{mode:<8} finite={np.all(np.isfinite(res.video))} dynamic degree {m.dynamic_degree:.2f} "
          f"loglik {m.video_loglik:.1f} cost {res.ledger.cost_in_c}c")
