"""Analytic component counts, area, delay and energy for OSNN vs an MZI-SVD mesh."""

from dataclasses import asdict, dataclass, field
import json
from importlib import resources
from pathlib import Path

import numpy as np

from ..butterfly import ButterflyNetwork
from ..butterfly.network import is_power_of_two
from ..errors import ConfigError, ShapeError

COMPONENTS = ("coupler", "phase_shifter", "crossing", "splitter", "modulator", "photodetector", "adc")
PRICE_FIELDS = ("area_mm2", "delay_ps", "power_mw", "energy_fj_per_bit")
ARCHS = ("osnn", "mzi_svd")


@dataclass
class ComponentLibrary:
    prices: dict
    route_ps_per_block: float = 0.0
    bits_per_sample: int = 8
    reconfig_energy_pj: float = 1.0
    crossings_per_unit_line: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        for comp, p in self.prices.items():
            for f in PRICE_FIELDS:
                if p.get(f, 0.0) < 0:
                    raise ConfigError("library prices must be >= 0", f"library.{comp}.{f}")
        for f in ("route_ps_per_block", "reconfig_energy_pj", "crossings_per_unit_line"):
            if getattr(self, f) < 0:
                raise ConfigError("must be >= 0", f"library.{f}")

    def price(self, comp, what):
        if comp not in self.prices or what not in self.prices[comp]:
            raise ConfigError(f"no {what} price for component {comp!r}", f"library.{comp}.{what}")
        return float(self.prices[comp][what])

    def scaled(self, factor):
        """Every price (and the routing delay) multiplied by ``factor``."""
        pr = {c: {f: (v * factor if f in PRICE_FIELDS else v) for f, v in p.items()} for c, p in self.prices.items()}
        return ComponentLibrary(pr, self.route_ps_per_block * factor, self.bits_per_sample,
                                self.reconfig_energy_pj * factor, self.crossings_per_unit_line, self.name)

    @classmethod
    def from_dict(cls, d):
        return cls({c: dict(p) for c, p in d["components"].items()}, float(d.get("route_ps_per_block", 0.0)),
                   int(d.get("bits_per_sample", 8)), float(d.get("reconfig_energy_pj", 1.0)),
                   float(d.get("crossings_per_unit_line", 1.0)), d.get("name", "custom"))

    def to_dict(self):
        return {"name": self.name, "components": self.prices, "route_ps_per_block": self.route_ps_per_block,
                "bits_per_sample": self.bits_per_sample, "reconfig_energy_pj": self.reconfig_energy_pj,
                "crossings_per_unit_line": self.crossings_per_unit_line}

    @classmethod
    def preset(cls, name="paper-defaults"):
        try:
            text = resources.files("osnn.cost").joinpath("presets", f"{name}.json").read_text()
        except FileNotFoundError:
            raise ConfigError(f"unknown library preset {name!r}", "cost.library") from None
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_dims(arch, m, n, k):
    if arch not in ARCHS:
        raise ConfigError(f"unknown architecture {arch!r}", "cost.arch")
    if not all(isinstance(v, (int, np.integer)) for v in (m, n, k)):
        raise ShapeError("m, n, k must be integers")
    if k < 2 or m < k or n < k:
        raise ShapeError(f"need m, n >= k >= 2, got m={m}, n={n}, k={k}")
    if arch == "osnn" and not is_power_of_two(k):
        raise ShapeError(f"OSNN block size must be a power of two, got {k}")


def _grid(m, n, k, prune_mask):
    mb, nb = -(-m // k), -(-n // k)
    if prune_mask is None:
        return np.ones((mb, nb), dtype=bool)
    g = getattr(prune_mask, "masks", None)
    if g is not None:
        if len(g) != 1:
            raise ShapeError("a multi-layer PruneMask needs model_cost, not a single-layer report")
        g = g[0]
    else:
        g = prune_mask
    g = np.asarray(g, dtype=bool)
    if g.shape != (mb, nb):
        raise ShapeError(f"prune mask shape {g.shape} does not match the {mb}x{nb} unit grid")
    return g


def trainable_devices(arch, m, n, k, baseline="mn"):
    """mn/k for OSNN; mn (or max(m^2, n^2)) for the general-matrix baseline."""
    _check_dims(arch, m, n, k)
    if arch == "osnn":
        return m * n // k
    if baseline == "max_sq":
        return max(m * m, n * n)
    return m * n


def count_components(arch, m, n, k, lib=None, prune_mask=None, count_sign=True):
    """Device counts.  Attenuators (one MZI each) are expanded into 2 couplers
    and 2 phase shifters (one of them the sign shifter); ``count_sign=False``
    drops the sign shifter from the phase-shifter total."""
    _check_dims(arch, m, n, k)
    per_line = 1.0 if lib is None else lib.crossings_per_unit_line
    c = dict.fromkeys(COMPONENTS, 0)
    c.update(modulator=n, photodetector=m, adc=m)
    if arch == "mzi_svd":
        mzis = m * (m - 1) // 2 + n * (n - 1) // 2
        att = min(m, n)
        c["coupler"] = 2 * mzis + 2 * att
        c["phase_shifter"] = 2 * mzis + (2 if count_sign else 1) * att
        c.update(mzi=mzis, attenuator=att, butterfly_units=0, sigma_units=0)
        return c
    g = _grid(m, n, k, prune_mask)
    net = ButterflyNetwork(k)
    col = g.sum(axis=0)      # kept units fed by each input block
    row = g.sum(axis=1)      # kept units summed into each output block
    n_units = int(g.sum())
    n_bfly = int((col > 0).sum() + (row > 0).sum())
    att = n_units * k
    c["coupler"] = n_bfly * net.n_couplers + 2 * att
    c["phase_shifter"] = n_bfly * net.n_phases + (2 if count_sign else 1) * att
    c["splitter"] = int(k * (np.maximum(col - 1, 0).sum() + np.maximum(row - 1, 0).sum()))
    c["crossing"] = int(round(n_bfly * net.crossing_count() + per_line * n_units * k))
    c.update(mzi=0, attenuator=att, butterfly_units=n_bfly, sigma_units=n_units)
    return c


def estimate_area(counts, lib):
    """Sum of count x area over priced component types (mm^2)."""
    return float(sum(v * lib.price(comp, "area_mm2") for comp, v in counts.items() if comp in COMPONENTS and v))


def optical_delay(arch, m, n, k, lib):
    """Longest input->output optical route (ps)."""
    _check_dims(arch, m, n, k)
    tc, tp = lib.price("coupler", "delay_ps"), lib.price("phase_shifter", "delay_ps")
    mzi = 2 * tc + 2 * tp
    if arch == "mzi_svd":
        # U mesh depth m, diagonal, V mesh depth n
        return (m + n + 1) * mzi
    s = int(np.log2(k))
    bfly = s * (tp + tc) + tp
    mb, nb = -(-m // k), -(-n // k)
    depth = int(np.ceil(np.log2(mb))) + int(np.ceil(np.log2(nb))) if mb * nb > 1 else 0
    return 2 * bfly + mzi + depth * lib.price("splitter", "delay_ps") + (mb + nb) * lib.route_ps_per_block


def estimate_delay(arch, m, n, k, lib):
    """Modulator + detector + ADC + optical path (ps)."""
    io = lib.price("modulator", "delay_ps") + lib.price("photodetector", "delay_ps") + lib.price("adc", "delay_ps")
    return io + optical_delay(arch, m, n, k, lib)


def estimate_energy(arch, m, n, k, lib, reconfig_rate=0.0, rate_hz=None, counts=None, baseline="mn"):
    """Power breakdown (mW) at ``rate_hz`` MVMs per second (default 1/delay).

    Returns dict with static, modulator, adc, detector, reconfig, total power,
    energy per MVM (pJ) and TOPS/W.
    """
    if reconfig_rate < 0:
        raise ConfigError("reconfiguration rate must be >= 0", "cost.reconfig_rate")
    counts = count_components(arch, m, n, k, lib) if counts is None else counts
    if rate_hz is None:
        rate_hz = 1e12 / estimate_delay(arch, m, n, k, lib)
    p = {
        "static_mw": counts["phase_shifter"] * lib.price("phase_shifter", "power_mw"),
        "modulator_mw": counts["modulator"] * lib.bits_per_sample * rate_hz * lib.price("modulator", "energy_fj_per_bit") * 1e-12,
        "detector_mw": counts["photodetector"] * lib.price("photodetector", "power_mw"),
        "adc_mw": counts["adc"] * lib.price("adc", "power_mw"),
        "reconfig_mw": trainable_devices(arch, m, n, k, baseline) * lib.reconfig_energy_pj * reconfig_rate * 1e-9,
    }
    total = sum(p.values())
    p["total_mw"] = total
    p["rate_hz"] = rate_hz
    p["energy_per_mvm_pj"] = total * 1e9 / rate_hz if rate_hz > 0 else 0.0
    ops = 2 * m * n * rate_hz
    p["tops_per_w"] = ops / 1e12 / (total * 1e-3) if total > 0 else float("inf")
    return p


def wdm_multiplier(k):
    if not isinstance(k, (int, np.integer)) or k < 2:
        raise ShapeError(f"wdm multiplier needs integer k >= 2, got {k!r}")
    return int(k - 1)


@dataclass
class CostReport:
    arch: str
    m: int
    n: int
    k: int
    counts: dict
    area_mm2: float
    delay_ps: float
    optical_delay_ps: float
    power_mw: float
    energy_per_mvm_pj: float
    ops_per_mvm: int
    rate_hz: float
    tops: float
    tops_per_mm2: float
    tops_per_w: float
    wdm: int = 1
    trainable_devices: int = 0
    pruned_fraction: float = 0.0
    library: str = ""
    power_breakdown: dict = field(default_factory=dict)

    def check(self, rtol=1e-9):
        """Recompute derived fields from the primary ones."""
        ok = self.ops_per_mvm == 2 * self.m * self.n
        tops = self.ops_per_mvm * self.rate_hz * self.wdm / 1e12
        ok &= np.isclose(self.tops, tops, rtol=rtol)
        ok &= np.isclose(self.rate_hz, 1e12 / self.delay_ps, rtol=rtol)
        if self.area_mm2 > 0:
            ok &= np.isclose(self.tops_per_mm2, self.tops / self.area_mm2, rtol=rtol)
        if self.power_mw > 0:
            ok &= np.isclose(self.tops_per_w, self.ops_per_mvm * self.rate_hz / 1e12 / (self.power_mw * 1e-3), rtol=rtol)
            ok &= np.isclose(self.energy_per_mvm_pj, self.power_mw * 1e9 / self.rate_hz, rtol=rtol)
        return bool(ok)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self):
        rows = [("architecture", self.arch), ("m x n, k", f"{self.m} x {self.n}, {self.k}")]
        rows += [(f"  {c}", str(v)) for c, v in self.counts.items() if v]
        rows += [("area (mm^2)", f"{self.area_mm2:.4f}"), ("delay (ps)", f"{self.delay_ps:.2f}"),
                 ("optical path (ps)", f"{self.optical_delay_ps:.2f}"), ("power (mW)", f"{self.power_mw:.2f}"),
                 ("energy / MVM (pJ)", f"{self.energy_per_mvm_pj:.3f}"), ("ops / MVM", str(self.ops_per_mvm)),
                 ("TOPS", f"{self.tops:.3f}"), ("TOPS/mm^2", f"{self.tops_per_mm2:.3f}"),
                 ("TOPS/W", f"{self.tops_per_w:.3f}"), ("WDM multiplier", str(self.wdm)),
                 ("trainable devices", str(self.trainable_devices)), ("pruned fraction", f"{self.pruned_fraction:.4f}")]
        w = max(len(a) for a, _ in rows)
        return "\n".join(f"{a.ljust(w)}  {b}" for a, b in rows)


def cost_report(arch, m, n, k, lib=None, prune_mask=None, use_wdm=False, reconfig_rate=0.0, count_sign=True):
    lib = ComponentLibrary.preset() if lib is None else lib
    counts = count_components(arch, m, n, k, lib, prune_mask if arch == "osnn" else None, count_sign)
    delay = estimate_delay(arch, m, n, k, lib)
    en = estimate_energy(arch, m, n, k, lib, reconfig_rate, counts=counts)
    area = estimate_area(counts, lib)
    wdm = wdm_multiplier(k) if use_wdm else 1
    ops = 2 * m * n
    tops = ops * en["rate_hz"] * wdm / 1e12
    pruned = 0.0
    if arch == "osnn" and prune_mask is not None:
        g = _grid(m, n, k, prune_mask)
        pruned = 1.0 - g.mean()
    return CostReport(arch, m, n, k, counts, area, delay, optical_delay(arch, m, n, k, lib), en["total_mw"],
                      en["energy_per_mvm_pj"], ops, en["rate_hz"], tops, tops / area if area > 0 else float("inf"),
                      en["tops_per_w"], wdm, trainable_devices(arch, m, n, k), pruned, lib.name,
                      {key: v for key, v in en.items() if key.endswith("_mw")})


def model_cost(model, lib=None, prune_mask=None):
    """Spatial OSNN cost summed over a model's blocked layers: total area and counts."""
    lib = ComponentLibrary.preset() if lib is None else lib
    masks = [l.mask for l in model.layers] if prune_mask is None else prune_mask.masks
    total = dict.fromkeys(COMPONENTS, 0)
    area = 0.0
    for layer, g in zip(model.layers, masks):
        c = count_components("osnn", max(layer.m, layer.k), max(layer.n, layer.k), layer.k, lib, g)
        area += estimate_area(c, lib)
        for comp in COMPONENTS:
            total[comp] += c[comp]
    return {"area_mm2": area, "counts": total}
