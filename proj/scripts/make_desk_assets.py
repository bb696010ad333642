# Copyright 2026 The sparsekit Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds the desk-scale assets: a 10-class procedural image set and a small
BatchNorm CNN trained on it, exported as sparsekit bundles.

    python3 scripts/make_desk_assets.py [--out assets]
"""
import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn

SIZE = 32
CLASSES = ["disc", "square", "triangle", "ring", "plus", "hstripes", "vstripes",
           "dstripes", "checker", "cross"]


def shape_mask(label, rng):
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float32)
    cx, cy = rng.uniform(10, 22, size=2)
    r = rng.uniform(5, 10)
    period = rng.uniform(3.5, 7.0)
    phase = rng.uniform(0, period)
    dx, dy = xx - cx, yy - cy
    if label == 0:
        m = dx**2 + dy**2 <= r**2
    elif label == 1:
        m = (np.abs(dx) <= r * 0.85) & (np.abs(dy) <= r * 0.85)
    elif label == 2:
        m = (dy <= r * 0.7) & (dy >= -r + 2 * np.abs(dx))
    elif label == 3:
        d = np.sqrt(dx**2 + dy**2)
        m = (d <= r) & (d >= r * 0.55)
    elif label == 4:
        w = r * 0.3
        m = ((np.abs(dx) <= w) & (np.abs(dy) <= r)) | ((np.abs(dy) <= w) & (np.abs(dx) <= r))
    elif label == 5:
        m = ((yy + phase) % period) < period / 2
    elif label == 6:
        m = ((xx + phase) % period) < period / 2
    elif label == 7:
        m = ((xx + yy + phase) % (period * 1.4)) < period * 0.7
    elif label == 8:
        m = (((xx + phase) // period + (yy + phase) // period) % 2) == 0
    else:
        w = r * 0.3
        m = ((np.abs(dx - dy) <= w) | (np.abs(dx + dy) <= w)) & (np.abs(dx) <= r) & (np.abs(dy) <= r)
    return m.astype(np.float32)


def render(label, rng):
    mask = shape_mask(label, rng)
    fg = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
    bg = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
    while np.abs(fg - bg).sum() < 0.6:
        bg = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
    img = mask[None] * fg[:, None, None] + (1 - mask[None]) * bg[:, None, None]
    img += rng.normal(0.0, 0.12, size=img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0)


def make_split(count, seed):
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % len(CLASSES)
    rng.shuffle(labels)
    images = np.stack([render(int(l), rng) for l in labels])
    # store at 8 bits so the files and the training tensors agree
    images = np.round(images * 255.0) / 255.0
    return images.astype(np.float32), labels.astype(np.int64)


def write_pnm(path, img):
    data = np.round(img.transpose(1, 2, 0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (SIZE, SIZE))
        f.write(data.tobytes())


def write_dataset(root, images, labels, pre):
    root.mkdir(parents=True, exist_ok=True)
    samples = []
    for i, (img, label) in enumerate(zip(images, labels)):
        name = "img_%05d.ppm" % i
        write_pnm(root / name, img)
        samples.append({"path": name, "label": int(label)})
    manifest = {"classes": CLASSES, "preprocess": pre, "samples": samples}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def write_tensor(path, array):
    array = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"SPKTENS0")
        f.write(struct.pack("<I", array.ndim))
        for extent in array.shape:
            f.write(struct.pack("<I", extent))
        f.write(array.tobytes())


class DeskCnn(nn.Module):
    def __init__(self):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 3, 1, 1), nn.BatchNorm2d(16), nn.ReLU(),
            nn.Conv2d(16, 32, 3, 2, 1), nn.BatchNorm2d(32), nn.ReLU(),
            nn.Conv2d(32, 32, 3, 2, 1), nn.BatchNorm2d(32), nn.ReLU())
        self.fc1 = nn.Linear(32 * 8 * 8, 40)
        self.fc2 = nn.Linear(40, len(CLASSES))

    def forward(self, x):
        x = self.features(x).flatten(1)
        return self.fc2(torch.relu(self.fc1(x)))


def export(model, out, pre, fuse):
    out.mkdir(parents=True, exist_ok=True)
    layers = []

    def store(entry, name, key, tensor):
        fname = "%s.%s.tens" % (name, key)
        write_tensor(out / fname, tensor.detach().double().numpy())
        entry[key] = fname

    convs = [m for m in model.features if isinstance(m, nn.Conv2d)]
    bns = [m for m in model.features if isinstance(m, nn.BatchNorm2d)]
    for i, (conv, bn) in enumerate(zip(convs, bns), start=1):
        name = "conv%d" % i
        entry = {"name": name, "kind": "conv2d", "stride": conv.stride[0], "padding": conv.padding[0]}
        w, b = conv.weight.double(), conv.bias.double()
        if fuse:
            scale = bn.weight.double() / torch.sqrt(bn.running_var.double() + bn.eps)
            w = w * scale[:, None, None, None]
            b = (b - bn.running_mean.double()) * scale + bn.bias.double()
        store(entry, name, "weights", w)
        store(entry, name, "bias", b)
        layers.append(entry)
        if not fuse:
            entry = {"name": "bn%d" % i, "kind": "batchnorm", "eps": bn.eps}
            store(entry, "bn%d" % i, "gamma", bn.weight)
            store(entry, "bn%d" % i, "beta", bn.bias)
            store(entry, "bn%d" % i, "running_mean", bn.running_mean)
            store(entry, "bn%d" % i, "running_var", bn.running_var)
            layers.append(entry)
        layers.append({"name": "relu%d" % i, "kind": "relu"})
    for name, fc in (("fc1", model.fc1), ("fc2", model.fc2)):
        entry = {"name": name, "kind": "fully_connected"}
        store(entry, name, "weights", fc.weight)
        store(entry, name, "bias", fc.bias)
        layers.append(entry)
        if name == "fc1":
            layers.append({"name": "relu4", "kind": "relu"})
    fmt = lambda v: ",".join("%.9g" % x for x in v)
    manifest = {
        "format": "sparsekit-bundle",
        "version": 1,
        "input_shape": [3, SIZE, SIZE],
        "class_count": len(CLASSES),
        "metadata": {"name": "desk_cnn", "preprocess.mean": fmt(pre["mean"]),
                     "preprocess.std": fmt(pre["std"])},
        "layers": layers,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "assets"))
    parser.add_argument("--epochs", type=int, default=6)
    args = parser.parse_args()
    out = Path(args.out)
    torch.manual_seed(0)
    torch.use_deterministic_algorithms(True)

    train_x, train_y = make_split(6000, 1)
    calib_x, calib_y = make_split(500, 2)
    val_x, val_y = make_split(1000, 3)
    mean = train_x.mean(axis=(0, 2, 3))
    std = train_x.std(axis=(0, 2, 3))
    pre = {"mean": [float(v) for v in mean], "std": [float(v) for v in std]}
    norm = lambda x: torch.from_numpy((x - mean[None, :, None, None]) / std[None, :, None, None])

    model = DeskCnn()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    xs, ys = norm(train_x), torch.from_numpy(train_y)
    for epoch in range(args.epochs):
        model.train()
        perm = torch.randperm(len(xs))
        for i in range(0, len(xs), 64):
            idx = perm[i:i + 64]
            loss = nn.functional.cross_entropy(model(xs[idx]), ys[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        model.eval()
        with torch.no_grad():
            acc = (model(norm(val_x)).argmax(1).numpy() == val_y).mean()
        print("epoch %d val top-1 %.4f" % (epoch, acc))

    model.eval()
    export(model, out / "desk_cnn_bn", pre, fuse=False)
    export(model, out / "desk_cnn", pre, fuse=True)
    write_dataset(out / "desk_data" / "val", val_x, val_y, pre)
    write_dataset(out / "desk_data" / "calib", calib_x, calib_y, pre)
    with torch.no_grad():
        logits = model(norm(val_x)).numpy()
    write_tensor(out / "desk_data" / "val_logits_reference.tens", logits)
    print("val top-1 %.4f" % (logits.argmax(1) == val_y).mean())


if __name__ == "__main__":
    main()
