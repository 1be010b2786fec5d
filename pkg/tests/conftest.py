import random
from dataclasses import replace

import pytest

from llsiscope.fabric import (
    FFConfig,
    LUTConfig,
    SwitchBox,
    empty_fabric,
    family_arity,
)


def random_fabric(family: str, seed: int, max_grid: int = 3, n_pins: int = 4,
                  p_lut: float = 0.3, p_ff: float = 0.2, n_routes: int = 10):
    """Seeded random valid config.

    LUTs and routes only read nets that already exist, so the combinational
    part is acyclic; FF d-inputs may read anything.
    """
    rnd = random.Random(seed)
    cols, rows = rnd.randint(1, max_grid), rnd.randint(1, max_grid)
    cfg = empty_fabric(family, cols, rows, f"rand{seed}")
    arity = family_arity(family)
    pins = tuple((f"p{k}", rnd.randint(0, 1)) for k in range(n_pins))
    nets = [n for n, _ in pins] + ["0", "1"]
    counter = 0

    new_tiles = []
    pending_ff = []
    for tile in cfg.tiles:
        slices = []
        for sl in tile.slices:
            luts = []
            for lut in sl.luts:
                if rnd.random() < p_lut:
                    k = rnd.randint(1, arity)
                    ins = [rnd.choice(nets) for _ in range(k)] + ["0"] * (arity - k)
                    out = f"n{counter}"
                    counter += 1
                    init = tuple(rnd.randint(0, 1) for _ in range(1 << arity))
                    luts.append(LUTConfig(lut.name, arity, init, tuple(ins), out, True))
                    nets.append(out)
                else:
                    luts.append(lut)
            ffs = []
            for ff in sl.ffs:
                if rnd.random() < p_ff:
                    q = f"q{counter}"
                    counter += 1
                    pending_ff.append(q)
                    ffs.append(FFConfig(ff.name, rnd.randint(0, 1), "?", q, True))
                    nets.append(q)
                else:
                    ffs.append(ff)
            slices.append(replace(sl, luts=tuple(luts), ffs=tuple(ffs)))
        new_tiles.append(replace(tile, slices=tuple(slices)))

    routes = {i: set() for i in range(len(new_tiles))}
    for _ in range(n_routes):
        t = rnd.randrange(len(new_tiles))
        sink = f"w{counter}"
        counter += 1
        routes[t].add((rnd.choice(nets), sink))
        nets.append(sink)
    out_tiles = []
    for i, tile in enumerate(new_tiles):
        slices = []
        for sl in tile.slices:
            ffs = tuple(replace(ff, d_net=rnd.choice(nets)) if ff.d_net == "?" else ff for ff in sl.ffs)
            slices.append(replace(sl, ffs=ffs))
        out_tiles.append(replace(tile, slices=tuple(slices),
                                 switchbox=SwitchBox(frozenset(routes[i]), tile.switchbox.capacity)))
    return replace(cfg, tiles=tuple(out_tiles), pins=pins)


@pytest.fixture
def rand_fabric():
    return random_fabric
