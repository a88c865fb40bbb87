"""Experiment configuration and the pipeline behind the command line.

A run is described by one JSON document.  Missing keys take the defaults of
:data:`DEFAULTS`; the expanded document is written next to the results and
embedded in each of them, so every artifact says how it was produced.
Timing and the worker count go to ``meta.json`` only, keeping the result
files byte-identical across repeated runs and worker counts.
"""
from __future__ import annotations

import copy
import json
import math
import os
import time

import numpy as np

from . import _io
from .fourier import FourierSeries2, check_genericity, make_example_potential, norm_s, pendulum_rotator
from .kam import KamInput, budget_D0, budget_total, evaluate
from .normal_form import BoundViolation, average_nonresonant, average_simple_resonance, d0_centers
from .pendulum import (LIB, ROT_PLUS, build_chart, log_split_fit, save_chart, separatrix_energy,
                       twist_hessian, write_table)
from .resonance import Annulus, ZoneDecomposition, choose_parameters, enumerate_generators
from .scan import Tolerances, measure_scan, scaling_fit

__all__ = ["ConfigError", "NumericFailure", "Inconclusive", "DEFAULTS", "load_config",
           "expand_config", "Runner", "SUBCOMMANDS"]


class ConfigError(ValueError):
    pass


class NumericFailure(RuntimeError):
    pass


class Inconclusive(RuntimeError):
    pass


DEFAULTS = {
    "potential": {"builtin": "esempietto", "s": 1.0, "delta": 0.5, "Kmax": 6},
    "a": 0.1,
    "alpha_rule": "gap",
    "c_universal": 2.0,
    "annulus": {"r": 0.5, "R": 2.0},
    "eps": [1e-3],
    "seed": 0,
    "workers": 1,
    "zones": {"grid": 101},
    "genericity": {"Kmax": None},
    "normal_form": {"eps": None, "n_y": 8, "N": None, "centers": 1, "resonances": [[1, 0], [1, 1]],
                    "slack": 10.0},
    "chart": {"z_points": 13, "z_min": 1e-6, "z_max": 1.0, "strict_width": False},
    "kam": {"c_kam": 1e-3, "tau": 1.5, "c2": 1.0},
    "scan": {"n_orbits": 500, "tolerances": {}},
    "fit": {},
}

SUBCOMMANDS = ("check-potential", "zones", "normal-form", "chart", "kam", "scan", "fit", "all")


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and k not in ("potential", "tolerances", "fit"):
            if not isinstance(v, dict):
                raise ConfigError(f"{path + k!r} must be an object")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def expand_config(raw: dict, base_dir: str = ".") -> dict:
    """Fill defaults and validate; raises :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, raw)
    pot = cfg["potential"]
    if "file" in pot:
        path = pot["file"]
        if not os.path.isabs(path):
            path = os.path.normpath(os.path.join(base_dir, path))
        if not os.path.exists(path):
            raise ConfigError(f"potential file {path} does not exist")
        pot["file"] = path
        pot.setdefault("delta", 0.5)
    elif pot.get("builtin") == "esempietto":
        pot = {"builtin": "esempietto", "s": 1.0, "delta": 0.5, "Kmax": 6, **pot}
    elif pot.get("builtin") == "pendulum-rotator":
        pot = {"builtin": "pendulum-rotator", "s": 1.0, "delta": 0.5, **pot}
    else:
        raise ConfigError("potential needs 'file' or builtin 'esempietto' / 'pendulum-rotator'")
    cfg["potential"] = pot
    if not 0 < cfg["a"] < 1 / 6:
        raise ConfigError("need 0 < a < 1/6")
    if cfg["alpha_rule"] not in ("gap", "half"):
        raise ConfigError("alpha_rule must be 'gap' or 'half'")
    r, R = cfg["annulus"]["r"], cfg["annulus"]["R"]
    if not 0 < r < R:
        raise ConfigError("need 0 < r < R")
    eps = cfg["eps"]
    if not isinstance(eps, list) or not eps or any((not isinstance(e, (int, float))) or e < 0 for e in eps):
        raise ConfigError("eps must be a nonempty list of nonnegative numbers")
    if not 0 < pot.get("delta", 0.5) <= 1:
        raise ConfigError("delta must lie in (0, 1]")
    if cfg["c_universal"] <= 1:
        raise ConfigError("c_universal must exceed 1")
    if int(cfg["scan"]["n_orbits"]) < 1:
        raise ConfigError("scan.n_orbits must be positive")
    try:
        Tolerances(**cfg["scan"]["tolerances"])
    except TypeError as exc:
        raise ConfigError(f"bad scan tolerances: {exc}") from None
    tol_full = Tolerances(**cfg["scan"]["tolerances"]).to_dict()
    cfg["scan"]["tolerances"] = tol_full
    for k in cfg["normal_form"]["resonances"]:
        if len(k) != 2 or not (k[0] > 0 and math.gcd(k[0], k[1]) == 1 or tuple(k) == (0, 1)):
            raise ConfigError(f"resonance {k} is not a generator")
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return expand_config(raw, os.path.dirname(os.path.abspath(path)))


def build_potential(pot: dict) -> FourierSeries2:
    if "file" in pot:
        try:
            return FourierSeries2.load(pot["file"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad potential file: {exc}") from None
    if pot["builtin"] == "esempietto":
        return make_example_potential(pot["s"], pot["delta"], pot["Kmax"])
    return pendulum_rotator(pot["s"])


def _tag(eps: float) -> str:
    return f"{eps:.6g}".replace(".", "p").replace("-", "m")


class Runner:
    """Executes subcommands, writing artifacts into ``out``."""

    def __init__(self, cfg: dict, out: str):
        self.cfg = cfg
        self.out = out
        self.f = build_potential(cfg["potential"])
        self.s = self.f.s
        self.delta = cfg["potential"].get("delta", 0.5)
        self.annulus = Annulus(cfg["annulus"]["r"], cfg["annulus"]["R"])
        self.meta = {"workers": cfg["workers"], "timing": {}}
        # the worker count changes nothing in the results, so it stays out of them
        self.echo = {k: v for k, v in cfg.items() if k != "workers"}
        self.inconclusive = False
        self._scans = {}
        os.makedirs(out, exist_ok=True)

    def _write(self, name, payload):
        payload = dict(payload)
        payload["config"] = self.echo
        _io.dump(payload, os.path.join(self.out, name))

    def zones_for(self, eps):
        alpha, K = choose_parameters(self.annulus.r_inner, eps, self.cfg["a"], self.cfg["alpha_rule"])
        return ZoneDecomposition(self.annulus, alpha, K)

    def run(self, cmd: str):
        t0 = time.perf_counter()
        steps = {"check-potential": self.check_potential, "zones": self.zones, "normal-form": self.normal_form,
                 "chart": self.chart, "kam": self.kam, "scan": self.scan, "fit": self.fit}
        if cmd == "all":
            for name in ("check-potential", "zones", "normal-form", "chart", "kam", "scan", "fit"):
                t1 = time.perf_counter()
                steps[name]()
                self.meta["timing"][name] = time.perf_counter() - t1
        else:
            steps[cmd]()
            self.meta["timing"][cmd] = time.perf_counter() - t0
        self.meta["timing"]["total"] = time.perf_counter() - t0
        _io.dump(self.echo, os.path.join(self.out, "config.json"))
        _io.dump(self.meta, os.path.join(self.out, "meta.json"))
        if self.inconclusive:
            raise Inconclusive("inconclusive checks present")

    # -- subcommands ----------------------------------------------------------
    def check_potential(self):
        g = self.cfg["genericity"]
        # a truncated potential is only examined up to its own order unless asked otherwise
        kmax = g["Kmax"] if g["Kmax"] is not None else max(1, self.f.max_order)
        rep = check_genericity(self.f, self.s, self.delta, kmax, self.cfg["c_universal"])
        d = rep.to_dict()
        d["norm_s"] = norm_s(self.f, self.s)
        self._write("genericity.json", d)
        if rep.inconclusive:
            self.inconclusive = True
        return rep

    def zones(self):
        n = self.cfg["zones"]["grid"]
        for eps in self.cfg["eps"]:
            if eps <= 0:
                continue
            z = self.zones_for(eps)
            pts = z.grid(n)
            z.write_csv(os.path.join(self.out, f"zones_eps{_tag(eps)}.csv"), pts)

    def _nf_eps(self):
        e = self.cfg["normal_form"]["eps"]
        return e if e is not None else max(self.cfg["eps"])

    def normal_form(self):
        c = self.cfg["normal_form"]
        eps = self._nf_eps()
        if eps <= 0:
            return []
        z = self.zones_for(eps)
        results = []
        try:
            centers = d0_centers(z, c["centers"], seed=self.cfg["seed"], f=self.f, eps=eps)
            for i, y in enumerate(centers):
                res = average_nonresonant(self.f, eps, z, y, n_y=c["n_y"], N=c["N"], slack=c["slack"])
                self._write(f"normal_form_D0_{i}.json", res.to_dict())
                results.append(res)
            for k in c["resonances"]:
                res = average_simple_resonance(self.f, eps, tuple(k), z, n_y=c["n_y"], N=c["N"],
                                               slack=c["slack"])
                self._write(f"normal_form_k{k[0]}_{k[1]}.json", res.to_dict())
                results.append(res)
        except BoundViolation as exc:
            raise NumericFailure(str(exc)) from None
        return results

    def chart(self):
        c = self.cfg["chart"]
        nfc = self.cfg["normal_form"]
        eps = self._nf_eps()
        if eps <= 0:
            return []
        z = self.zones_for(eps)
        charts = []
        for k in nfc["resonances"]:
            nf = average_simple_resonance(self.f, eps, tuple(k), z, n_y=nfc["n_y"], N=nfc["N"],
                                          slack=nfc["slack"])
            if not any(nf.profile_modes().values()):
                continue
            try:
                ch = build_chart(nf, eps, self.annulus.r_inner, z.K, strict_width=c["strict_width"])
            except ValueError as exc:
                raise NumericFailure(f"chart at {k}: {exc}") from None
            zs = np.geomspace(c["z_min"], c["z_max"], c["z_points"])
            p1 = ch.p1_center
            fits = [log_split_fit(ch, sig, p1) for sig in (ROT_PLUS, LIB)]
            tw = twist_hessian(ch, ROT_PLUS, [p1], zs, fit_window=(c["z_min"], min(1e-2, c["z_max"])))
            name = f"chart_k{k[0]}_{k[1]}"
            d = ch.to_dict()
            d["log_split"] = [f.to_dict() for f in fits]
            d["twist"] = tw.to_dict()
            d["rescaled_width"] = self.annulus.r_inner / (32 * ch.knorm * z.K) / (4 * ch.lam * ch.knorm)
            self._write(name + ".json", d)
            E0 = separatrix_energy(ch, p1)
            write_table(ch, os.path.join(self.out, name + "_rot.csv"), ROT_PLUS, E0 + zs, p1)
            charts.append(ch)
        return charts

    def kam(self):
        k = self.cfg["kam"]
        out = []
        sup = norm_s(self.f, self.s)
        for eps in self.cfg["eps"]:
            if eps <= 0:
                continue
            z = self.zones_for(eps)
            r0 = z.alpha / (2 * z.K)
            eps0 = eps * math.exp(-z.K * self.s / 3) * sup
            cert = evaluate(KamInput(2, 1.0, 1.0, eps0, r0, self.s / 2, k["tau"],
                                     2 * self.annulus.r_outer, k["c_kam"]))
            out.append({"eps": eps, "K": z.K, "alpha": z.alpha, "certificate": cert.to_dict(),
                        "budget_D0": budget_D0(self.s, eps, self.cfg["a"]),
                        "budget_total": budget_total(eps, self.cfg["a"], self.annulus.r_inner,
                                                     self.annulus.r_outer, self.s, k["c2"])})
        self._write("kam.json", {"certificates": out})
        return out

    def scan(self):
        sc = self.cfg["scan"]
        tol = Tolerances(**sc["tolerances"])
        reports = []
        for eps in self.cfg["eps"]:
            rep = measure_scan(self.f, eps, self.annulus, int(sc["n_orbits"]), tol,
                               seed=self.cfg["seed"], workers=self.cfg["workers"])
            self.meta["timing"][f"scan_eps{_tag(eps)}"] = rep.meta["seconds"]
            self._write(f"scan_eps{_tag(eps)}.json", rep.to_dict(include_meta=False))
            rep.write_csv(os.path.join(self.out, f"scan_eps{_tag(eps)}.csv"))
            if rep.counts["inconclusive"]:
                self.meta.setdefault("inconclusive_orbits", {})[str(eps)] = rep.counts["inconclusive"]
            self._scans[eps] = rep
            reports.append(rep)
        return reports

    def fit(self):
        eps, m = [], []
        for e in self.cfg["eps"]:
            rep = self._scans.get(e)
            if rep is None:
                path = os.path.join(self.out, f"scan_eps{_tag(e)}.json")
                if not os.path.exists(path):
                    raise ConfigError(f"no scan report for eps={e}; run 'scan' first")
                with open(path) as fh:
                    frac = json.load(fh)["fractions"]["non-torus"]
            else:
                frac = rep.non_torus_fraction
            eps.append(e)
            m.append(frac)
        if len(eps) < 3:
            payload = {"status": "skipped", "reason": "need at least three eps values", "eps": eps, "m": m}
        else:
            fit = scaling_fit(eps, m)
            payload = {**fit.to_dict(), "eps": eps, "m": m}
            if fit.status != "ok":
                self.inconclusive = True
        self._write("fit.json", payload)
        return payload
