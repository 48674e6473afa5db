#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Export a torchvision backbone state dict to a sidetune tensor archive.

Usage:
  export_torchvision_weights.py --arch mobilenet_v2 --out mobilenet_v2.starch [--pretrained]
  export_torchvision_weights.py --arch resnet50 --out probe.starch --seed 3 --probe 64

With --pretrained the ImageNet weights are fetched through torchvision's
download cache. Without it the network is seeded-random and its batch-norm
statistics are perturbed, which is what the parity fixture uses. --probe N
stores a random 1x3xNxN input and the pooled feature vector torchvision
computes for it as "probe.input" / "probe.output".
"""

import argparse
import json
import struct
import sys

import torch
import torchvision

MAGIC = b"STARCH01"


def build(arch: str, pretrained: bool) -> torch.nn.Module:
    if arch == "mobilenet_v2":
        weights = torchvision.models.MobileNet_V2_Weights.IMAGENET1K_V1 if pretrained else None
        return torchvision.models.mobilenet_v2(weights=weights)
    if arch == "resnet50":
        weights = torchvision.models.ResNet50_Weights.IMAGENET1K_V1 if pretrained else None
        return torchvision.models.resnet50(weights=weights)
    raise SystemExit(f"unknown arch {arch!r}")


def pooled_features(arch: str, model: torch.nn.Module, x: torch.Tensor) -> torch.Tensor:
    if arch == "mobilenet_v2":
        y = model.features(x)
    else:
        y = x
        for name in ("conv1", "bn1", "relu", "maxpool", "layer1", "layer2", "layer3", "layer4"):
            y = getattr(model, name)(y)
    return torch.flatten(torch.nn.functional.adaptive_avg_pool2d(y, 1), 1)


def write_archive(path: str, metadata: dict, tensors: dict) -> None:
    meta = json.dumps(metadata).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(meta)))
        f.write(meta)
        f.write(struct.pack("<Q", len(tensors)))
        for name in sorted(tensors):
            t = tensors[name].detach().to(torch.float32).contiguous().cpu()
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", t.dim()))
            for d in t.shape:
                f.write(struct.pack("<Q", d))
            f.write(t.numpy().astype("<f4").tobytes())


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--arch", required=True, choices=["mobilenet_v2", "resnet50"])
    p.add_argument("--out", required=True)
    p.add_argument("--pretrained", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probe", type=int, default=0, metavar="SIDE")
    args = p.parse_args()

    torch.manual_seed(args.seed)
    model = build(args.arch, args.pretrained)
    if not args.pretrained:
        with torch.no_grad():
            for m in model.modules():
                if isinstance(m, torch.nn.BatchNorm2d):
                    m.running_mean.uniform_(-0.1, 0.1)
                    m.running_var.uniform_(0.5, 1.5)
                    m.weight.uniform_(0.5, 1.5)
                    m.bias.uniform_(-0.1, 0.1)
    model.eval()

    tensors = {k: v for k, v in model.state_dict().items() if v.is_floating_point()}
    metadata = {"source": "torchvision", "arch": args.arch, "pretrained": args.pretrained,
                "torchvision": torchvision.__version__}
    if args.probe:
        x = torch.rand(1, 3, args.probe, args.probe) * 2 - 1
        with torch.no_grad():
            y = pooled_features(args.arch, model, x)
        tensors["probe.input"] = x
        tensors["probe.output"] = y
    write_archive(args.out, metadata, tensors)
    return 0


if __name__ == "__main__":
    sys.exit(main())
