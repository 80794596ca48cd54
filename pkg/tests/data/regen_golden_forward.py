"""Regenerate golden_forward_seed0.json with a torch (float64) forward pass.

Only the weights come from quatmotion (seeded init); the forward computation
is torch's own Linear / LayerNorm / LeakyReLU / sigmoid stack.
Run from the repo root: python tests/data/regen_golden_forward.py
"""
import json
from pathlib import Path

import torch

from quatmotion import controller

HEADS = ("kappa_p", "kappa_d", "kappa_a", "bias", "root_kappa_p", "root_kappa_d")


def build(weights, n_joints=24, hidden=512):
    def linear(name, d_in, d_out):
        lin = torch.nn.Linear(d_in, d_out, dtype=torch.float64)
        with torch.no_grad():
            lin.weight.copy_(torch.as_tensor(weights[f"{name}.weight"]))
            lin.bias.copy_(torch.as_tensor(weights[f"{name}.bias"]))
        return lin

    def norm(name):
        ln = torch.nn.LayerNorm(hidden, eps=1e-5, dtype=torch.float64)
        with torch.no_grad():
            ln.weight.copy_(torch.as_tensor(weights[f"{name}.weight"]))
            ln.bias.copy_(torch.as_tensor(weights[f"{name}.bias"]))
        return ln

    trunk = torch.nn.Sequential(
        linear("block1.linear", 11 * n_joints + 9, hidden), norm("block1.norm"), torch.nn.LeakyReLU(0.01),
        linear("block2.linear", hidden, hidden), norm("block2.norm"), torch.nn.LeakyReLU(0.01),
    )
    sizes = {"kappa_p": n_joints, "kappa_d": n_joints, "kappa_a": n_joints, "bias": 3 * n_joints,
             "root_kappa_p": 1, "root_kappa_d": 1}
    heads = {h: linear(f"head.{h}", hidden, sizes[h]) for h in HEADS}
    return trunk, heads


def forward(weights, x, scales=(40.0, 30.0, 40.0, 200.0, 200.0)):
    trunk, heads = build(weights)
    with torch.no_grad():
        h = trunk(torch.as_tensor(x, dtype=torch.float64))
        sp, sd, sa, srp, srd = scales
        out = [
            torch.sigmoid(heads["kappa_p"](h)) * sp,
            torch.sigmoid(heads["kappa_d"](h)) * sd,
            torch.sigmoid(heads["kappa_a"](h)) * sa,
            heads["bias"](h),
            torch.sigmoid(heads["root_kappa_p"](h)) * srp,
            torch.sigmoid(heads["root_kappa_d"](h)) * srd,
        ]
    return torch.cat(out).tolist()


if __name__ == "__main__":
    weights = controller.init_weights(seed=0)
    x = [1.0] * controller.input_dim(24)
    doc = {"seed": 0, "input": "ones(273)",
           "layout": "kp[24], kd[24], ka[24], bias[72], root_kp, root_kd",
           "output": forward(weights, x)}
    Path(__file__).with_name("golden_forward_seed0.json").write_text(json.dumps(doc, indent=1) + "\n")
