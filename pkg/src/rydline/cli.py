"""Command-line entry point ``rydline``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import RydlineError


def _grid(text: str) -> np.ndarray:
    """'a:b:n' (inclusive linspace) or a comma list."""
    if ":" in text:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    return np.array([float(x) for x in text.split(",") if x])


def _write_rows(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


# -- spectrum -----------------------------------------------------------------


def _cmd_spectrum(args):
    from .spectrum import (
        format_spectrum,
        frequency_to_phase,
        phase_to_frequency,
        read_spectrum,
        rescale_frequency_grid,
        synthesize_default_spectrum,
        total_power,
    )

    if args.action == "default":
        spec = synthesize_default_spectrum()
        text = format_spectrum(spec, "frequency_MHz phase_noise_rad2_per_MHz")
    else:
        if not args.input:
            raise RydlineError("--in is required")
        spec = read_spectrum(args.input, args.kind)
        if args.action == "power":
            print(json.dumps({"kind": args.kind, "total_power": total_power(spec),
                              "grid_spacing": spec.grid_spacing, "nyquist": spec.nyquist, "bins": len(spec)}))
            return 0
        if args.action == "convert":
            if args.kind == "frequency":
                spec = frequency_to_phase(spec)
                text = format_spectrum(spec, "frequency_MHz phase_noise_rad2_per_MHz")
            else:
                spec = phase_to_frequency(spec)
                text = format_spectrum(spec, "frequency_MHz frequency_noise_MHz2_per_MHz")
        else:  # rescale
            if args.kind != "phase":
                spec = frequency_to_phase(spec)
            spec = rescale_frequency_grid(spec, args.kappa)
            text = format_spectrum(spec, f"rescaled by kappa={args.kappa}; phase noise rad^2/MHz")
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_gen_noise(args):
    from .noisegen import derive_seed, generate_signal
    from .spectrum import frequency_to_phase, read_spectrum, synthesize_default_spectrum, total_power

    if args.spectrum:
        spec = read_spectrum(args.spectrum, args.kind)
        if args.kind == "frequency":
            spec = frequency_to_phase(spec)
    else:
        spec = synthesize_default_spectrum()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = []
    for r in range(args.realizations):
        seed = derive_seed(args.seed, r)
        sig = generate_signal(spec, seed)
        seeds.append(seed)
        np.savetxt(out / f"phase_{r:04d}.csv", np.column_stack([sig.times, sig.samples]),
                   delimiter=",", header="t_us,phi_rad", comments="", fmt="%.17g")
    manifest = {
        "seed": args.seed,
        "realization_seeds": seeds,
        "delta_nu": spec.grid_spacing,
        "N": len(sig),
        "dt": sig.dt,
        "total_power": total_power(spec),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return 0


# -- analysis -----------------------------------------------------------------


def _cmd_spectrum_scan(args):
    from .analysis import sector_spectrum_sweep
    from .model import ChainParams

    sweep = sector_spectrum_sweep(_grid(args.omega), ChainParams(args.n), args.delta)
    rows = []
    for om, energies, metric in zip(sweep.omegas, sweep.energies, sweep.cluster):
        for level, e in enumerate(energies):
            rows.append([om, sweep.delta, level, e, metric])
    _write_rows(args.out, ["omega", "delta", "level", "energy", "cluster_metric"], rows)
    return 0


def _cmd_gap_sweep(args):
    from .analysis import ground_gap
    from .model import ChainParams

    params = ChainParams(args.n)
    rows = []
    for om in _grid(args.omega):
        for de in _grid(args.delta):
            gap, degenerate = ground_gap(om, de, params)
            rows.append([om, de, gap, int(degenerate)])
    _write_rows(args.out, ["omega", "delta", "gap", "degenerate"], rows)
    return 0


def _cmd_matrix_elements(args):
    from .analysis import chain_eigensystem, operator_matrix_elements
    from .model import ChainParams, interaction_observable, total_number_operator, z2_order_parameter

    params = ChainParams(args.n)
    ops = {"n": total_number_operator, "hint": interaction_observable, "z2": z2_order_parameter}
    eig = chain_eigensystem(params, args.omega, args.delta, args.sector)
    rows_idx = [int(x) for x in args.rows.split(",")]
    table = operator_matrix_elements(ops[args.operator](params), eig, rows_idx)
    rows = []
    for pos, i in enumerate(table.rows):
        for j, (e, v) in enumerate(zip(table.energies, table.elements[pos])):
            rows.append([args.omega, args.delta, i, j, e, v])
    _write_rows(args.out, ["omega", "delta", "source", "target", "energy_rel", "element_sq"], rows)
    return 0


def _cmd_thermo(args):
    from .analysis import Eigensystem, chain_eigensystem
    from .model import ChainParams, interaction_observable, load_state, total_number_operator, z2_order_parameter
    from .thermo import eth_comparison

    psi = load_state(args.state).astype(complex)
    psi /= np.linalg.norm(psi)
    n = int(round(np.log2(psi.size)))
    params = ChainParams(n)
    if args.eig.endswith(".npz"):
        with np.load(args.eig) as data:
            eig = Eigensystem(data["energies"], data["vectors"])
    else:
        omega, delta = (float(x) for x in args.eig.split(","))
        eig = chain_eigensystem(params, omega, delta)
    table = {"hint": interaction_observable, "z2": z2_order_parameter, "n": total_number_operator}
    obs = {name: table[name](params) for name in args.observables.split(",")}
    res = eth_comparison(psi, obs, eig)
    out = {name: {"beta": r.beta, "lt": r.long_time, "thermal": r.thermal, "gap": r.gap,
                  "energy_rel": r.energy} for name, r in res.items()}
    print(json.dumps(out, indent=2))
    return 0


# -- campaigns ----------------------------------------------------------------

_CAMPAIGN_KIND = {"ramp": "ramp", "scale-sweep": "scale", "quench": "quench", "thermo-sweep": "thermo"}


def _cmd_campaign(args):
    from .lab import CampaignConfig, load_config, run_campaign

    cfg = load_config(args.config)
    expected = _CAMPAIGN_KIND[args.command]
    if cfg.kind != expected:
        raise RydlineError(f"config kind {cfg.kind!r} does not match verb {args.command!r}")
    if args.fast:
        cfg = cfg.fast()
    d = cfg.to_dict()
    if args.out:
        d["output_dir"] = args.out
    if args.workers:
        d["workers"] = args.workers
    d.setdefault("output_dir", str(Path(args.config).with_suffix("")) + "_out")
    cfg = CampaignConfig(**d)
    res = run_campaign(cfg)
    print(f"wrote {len(res.rows)} rows to {cfg.output_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rydline", description="Noisy Rydberg-chain state preparation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", help="convert, rescale or integrate a noise spectrum")
    s.add_argument("action", choices=["convert", "rescale", "power", "default"])
    s.add_argument("--in", dest="input")
    s.add_argument("--kind", choices=["phase", "frequency"], default="phase")
    s.add_argument("--kappa", type=float, default=1.0)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_spectrum)

    g = sub.add_parser("gen-noise", help="synthesize phase-noise realizations")
    g.add_argument("--spectrum", help="two-column spectrum file (default: built-in surrogate)")
    g.add_argument("--kind", choices=["phase", "frequency"], default="phase")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--realizations", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_noise)

    sc = sub.add_parser("spectrum-scan", help="symmetric-sector spectra versus Omega")
    sc.add_argument("--n", type=int, required=True)
    sc.add_argument("--omega", default="0.1:1.0:10", help="grid a:b:n or comma list (V_dd)")
    sc.add_argument("--delta", type=float, default=1.1)
    sc.add_argument("--out")
    sc.set_defaults(func=_cmd_spectrum_scan)

    gs = sub.add_parser("gap-sweep", help="ground-state gap over an (Omega, delta) grid")
    gs.add_argument("--n", type=int, required=True)
    gs.add_argument("--omega", default="0.1:1.0:10")
    gs.add_argument("--delta", default="1.1")
    gs.add_argument("--out")
    gs.set_defaults(func=_cmd_gap_sweep)

    me = sub.add_parser("matrix-elements", help="|<E_j|A|E_i>|^2 table")
    me.add_argument("--n", type=int, required=True)
    me.add_argument("--omega", type=float, required=True)
    me.add_argument("--delta", type=float, required=True)
    me.add_argument("--operator", choices=["n", "hint", "z2"], default="n")
    me.add_argument("--rows", default="0")
    me.add_argument("--sector", choices=["full", "symmetric"], default="full")
    me.add_argument("--out")
    me.set_defaults(func=_cmd_matrix_elements)

    th = sub.add_parser("thermo", help="long-time vs thermal expectation values of a state")
    th.add_argument("--state", required=True, help="binary state file")
    th.add_argument("--observables", default="hint,z2")
    th.add_argument("--eig", required=True, help="eigensystem .npz cache file or 'omega,delta'")
    th.set_defaults(func=_cmd_thermo)

    for verb in _CAMPAIGN_KIND:
        c = sub.add_parser(verb, help=f"run a {_CAMPAIGN_KIND[verb]} campaign")
        c.add_argument("--config", required=True)
        c.add_argument("--fast", action="store_true", help="use fast_realizations (default 20)")
        c.add_argument("--out")
        c.add_argument("--workers", type=int)
        c.set_defaults(func=_cmd_campaign)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RydlineError, OSError) as exc:
        print(f"rydline: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
