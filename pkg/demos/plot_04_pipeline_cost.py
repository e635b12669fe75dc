"""
What does the two-stage pipeline cost?
======================================

Count denoiser calls per stage and convert to video-call units: one call on
an F-frame video costs 1c, an image call costs 1/F c.
"""

from anchorvid.config import PipelineConfig
from anchorvid.pipeline import build_context, run_baseline, run_mode

cfg = PipelineConfig()
ctx = build_context(cfg)

print("method             image  nivsds  regen  total")
base = run_baseline(cfg, ctx).ledger
print(f"{'baseline':<18} {'-':>5}  {'-':>6}  {'-':>5}  {base.cost_in_c}c")
for mode in ("full", "skip_selection", "skip_nivsds", "skip_regeneration"):
    led = run_mode(cfg, mode, 0, ctx).ledger
    print(f"{mode:<18} {str(led.image_cost):>5}  {led.nivsds_calls:>6}  {led.regen_calls:>5}  "
          f"{led.cost_in_c}c")

# and what the extra cost buys: motion and likelihood over a few paired seeds
for mode in ("baseline", "skip_nivsds", "full"):
    ms = [run_mode(cfg, mode, seed, ctx).metrics for seed in range(20)]
    dd = sum(m.dynamic_degree for m in ms) / len(ms)
    ll = sum(m.video_loglik for m in ms) / len(ms)
    print(f"{mode:<12} mean dynamic degree {dd:.3f}  mean loglik {ll:.1f}")
