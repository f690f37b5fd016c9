#!/usr/bin/env python3
"""Regenerate the bundled scene corpus under scenes/.

Sketches are label maps (pixel value = instance id, 0 = background) drawn from
simple primitives with a fixed RNG seed, so the output is reproducible.
"""
import json
import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "scenes"
SIZE = 64


def blank():
    return [[0] * SIZE for _ in range(SIZE)]


def rect(g, v, r0, c0, r1, c1):
    for r in range(max(r0, 0), min(r1, SIZE)):
        for c in range(max(c0, 0), min(c1, SIZE)):
            g[r][c] = v


def ellipse(g, v, cr, cc, rr, rc):
    for r in range(SIZE):
        for c in range(SIZE):
            if ((r - cr) / rr) ** 2 + ((c - cc) / rc) ** 2 <= 1.0:
                g[r][c] = v


def line(g, v, r0, c0, r1, c1, width=1):
    steps = max(abs(r1 - r0), abs(c1 - c0), 1)
    for s in range(steps + 1):
        r = round(r0 + (r1 - r0) * s / steps)
        c = round(c0 + (c1 - c0) * s / steps)
        rect(g, v, r - width // 2, c - width // 2, r - width // 2 + width, c - width // 2 + width)


def triangle(g, v, apex_r, apex_c, base_r, half):
    for r in range(max(apex_r, 0), min(base_r + 1, SIZE)):
        t = (r - apex_r) / max(base_r - apex_r, 1)
        w = int(round(half * t))
        rect(g, v, r, apex_c - w, r + 1, apex_c + w + 1)


def dots(g, v, rng, count, size):
    for _ in range(count):
        r, c = rng.randrange(SIZE - size), rng.randrange(SIZE - size)
        rect(g, v, r, c, r + size, c + size)


def ensure_present(g, ids, rng):
    for v in ids:
        if not any(v in row for row in g):
            g[rng.randrange(SIZE)][rng.randrange(SIZE)] = v


def write_pgm(path, g):
    h, w = len(g), len(g[0])
    path.write_bytes(f"P5 {w} {h} 255\n".encode() + bytes(x for row in g for x in row))


def write_ppm(path, g, colors):
    h, w = len(g), len(g[0])
    body = bytearray()
    for row in g:
        for x in row:
            body += bytes(colors.get(x, (0, 0, 0)))
    path.write_bytes(f"P6 {w} {h} 255\n".encode() + bytes(body))


def default_scene():
    g = blank()
    rect(g, 1, 24, 0, 64, 64)                 # plain
    triangle(g, 4, 2, 44, 26, 18)             # mountain
    line(g, 3, 24, 0, 63, 40, width=5)        # river
    line(g, 2, 63, 60, 30, 20, width=1)       # path
    rect(g, 5, 40, 48, 43, 51)                # houses
    rect(g, 5, 50, 54, 52, 57)
    write_pgm(ROOT / "default.pgm", g)
    scene = {
        "name": "default",
        "prompt": "Isometric view of game scene, a plain, walk path, a river, a high mountain, houses.",
        "instances": [
            {"word": w, "id": i}
            for i, w in enumerate(["plain", "path", "river", "mountain", "houses"], start=1)
        ],
        "sketch": "default.pgm",
        "context_length": 77,
        "embedding": {"mode": "synthetic", "seed": 0, "dim": 64},
        "k": 2,
        "beta": 1.0,
        "dense_tune": {"strength": 2.5, "exponent": 2.0},
        "timesteps": 8,
        "seed": 7,
        "layers": "default",
    }
    (ROOT / "default.json").write_text(json.dumps(scene, indent=2) + "\n")


NOUNS = [
    "river", "lake", "forest", "mountain", "village", "bridge", "castle", "tower", "road",
    "houses", "trees", "windmill", "temple", "waterfall", "field", "boats", "island", "path",
    "rocks", "farm", "tents", "statue", "harbor", "volcano", "well", "fence", "meadow", "ruins",
]
ADJS = ["small", "wide", "old", "tall", "green", "stone", "winding", "distant", "quiet", "red"]
OPENERS = [
    "Isometric view of game scene,", "Top down fantasy map with", "Concept art of a valley,",
    "Game level layout showing", "Aerial view of a landscape,",
]
COLORS = [(230, 40, 40), (40, 200, 60), (50, 80, 230), (240, 220, 40), (200, 60, 220), (40, 220, 220)]


def corpus_scene(idx, rng):
    count = rng.randint(2, 6)
    nouns = rng.sample(NOUNS, count)
    phrase = ", ".join(f"a {rng.choice(ADJS)} {n}" for n in nouns)
    prompt = f"{rng.choice(OPENERS)} {phrase}."
    words = prompt.lower().replace(",", " ").replace(".", " ").split()
    assert all(words.count(n) == 1 for n in nouns), prompt

    g = blank()
    ids = list(range(1, count + 1))
    # first instance is a large region, the rest mix medium shapes and tiny marks
    rect(g, 1, rng.randrange(0, 24), 0, SIZE, SIZE)
    for v in ids[1:]:
        kind = rng.choice(["ellipse", "line", "rect", "dots", "pixel"])
        if kind == "ellipse":
            ellipse(g, v, rng.randrange(8, 56), rng.randrange(8, 56), rng.randint(3, 12), rng.randint(3, 12))
        elif kind == "line":
            line(g, v, rng.randrange(SIZE), rng.randrange(SIZE), rng.randrange(SIZE), rng.randrange(SIZE),
                 width=rng.randint(1, 4))
        elif kind == "rect":
            r, c = rng.randrange(52), rng.randrange(52)
            rect(g, v, r, c, r + rng.randint(3, 12), c + rng.randint(3, 12))
        elif kind == "dots":
            dots(g, v, rng, rng.randint(1, 4), rng.randint(1, 3))
        else:
            g[rng.randrange(SIZE)][rng.randrange(SIZE)] = v
    ensure_present(g, ids, rng)

    name = f"scene_{idx:02d}"
    scene = {
        "name": name,
        "prompt": prompt,
        "instances": [{"word": n, "id": i} for i, n in zip(ids, nouns)],
        "k": 2,
        "beta": 1.0,
        "timesteps": 8,
        "seed": idx,
    }
    if idx == 19:
        # color sketch variant
        colors = dict(zip(ids, COLORS))
        write_ppm(ROOT / "corpus" / f"{name}.ppm", g, colors)
        scene["sketch"] = f"{name}.ppm"
        for inst in scene["instances"]:
            inst["color"] = list(colors[inst["id"]])
    elif idx == 20:
        # overlapping instances, one sketch per instance
        for inst in scene["instances"]:
            m = [[1 if x == inst["id"] else 0 for x in row] for row in g]
            if inst["id"] == 2:
                rect(m, 1, 20, 20, 40, 40)
            if inst["id"] == 3:
                rect(m, 1, 30, 30, 46, 46)
            fname = f"{name}_{inst['word']}.pgm"
            write_pgm(ROOT / "corpus" / fname, m)
            inst["sketch"] = fname
    else:
        write_pgm(ROOT / "corpus" / f"{name}.pgm", g)
        scene["sketch"] = f"{name}.pgm"
    (ROOT / "corpus" / f"{name}.json").write_text(json.dumps(scene, indent=2) + "\n")


def main():
    (ROOT / "corpus").mkdir(parents=True, exist_ok=True)
    default_scene()
    rng = random.Random(20240)
    for idx in range(1, 21):
        corpus_scene(idx, rng)


if __name__ == "__main__":
    main()
