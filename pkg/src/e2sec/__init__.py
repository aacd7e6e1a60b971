"""Desk-scale E2 control-channel security testbed.

Two halves share this package:

* channel cost: an E2-lite framing codec (:mod:`e2sec.wire`), an ESP-style
  sealed record layer with anti-replay (:mod:`e2sec.secchan`) and the
  latency/throughput harnesses run over an emulated link
  (:mod:`e2sec.linkbench`);
* decision robustness: synthetic slice KPIs (:mod:`e2sec.kpi`), adversarial
  perturbation (:mod:`e2sec.attack`), a denoising autoencoder plus a
  deterministic slicing/scheduling policy (:mod:`e2sec.intelligence`) and the
  deviation metrics used to score them (:mod:`e2sec.metrics`).
"""

__version__ = "0.1.0"
