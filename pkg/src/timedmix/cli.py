"""Command-line experiment harness.

Settings come from built-in defaults, then an optional ``--config`` file
of ``key = value`` lines, then command-line flags (flags win). Data goes
to files under ``--out``; diagnostics go to stderr.

Subcommands::

    design        design one characteristic and write it as a filter file
    evaluate      Monte-Carlo vs closed-form MSE for a set of filters
    fig2          long-term (near0 / near1) and short-term designs, taps + spectra
    cascade-demo  realize the short-term design as a cascade of nodes
    expmix-demo   centralized vs decentralized exponential mix
    theory-check  closed-form MSE report for one filter
"""

import argparse
import configparser
import dataclasses
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import characteristic as ch
from . import formats, network, theory
from .adversary import SingularDesignError, empirical_mse, ls_estimate, mc_mse
from .characteristic import ConstraintSet, DelayCharacteristic
from .design import OptimizerOptions, design_long_term, design_short_term, min_gamma1_closed
from .design import DesignContext, optimize_filter
from .mix import simulate_mix
from .rng import derive_seed
from .traffic import gen_poisson_traffic, gen_zipf_profile, sharpness

log = logging.getLogger("timedmix")


@dataclass
class ExperimentConfig:
    scenario: str = "default"
    n_senders: int = 10
    n_receivers: int = 10
    rho: int = 2000
    dbar: float = 8.0
    rates: str = "5"
    friends: int = 10
    exponent: float = 1.0
    filters: str = "delta,uniform:2,uniform:4,uniform:8"
    objective: str = "sharp0"
    trials: int = 200
    seed: int = 0
    out: str = "out"
    restarts: int = 8
    weighting: str = "rate_squared"
    lags: str = "all"
    tau: float = 0.0          # round length in seconds; metadata only
    paper_scale: bool = False
    stages: int = 5
    per_stage_len: int = 0    # 0: smallest length that can reach the target
    alpha: float = 0.3
    n_nodes: int = 5
    n_messages: int = 100000
    max_rounds: int = 200
    profile_file: str = ""    # profile CSV; empty: synthetic Zipf profile

    def __post_init__(self):
        for name in ("n_senders", "n_receivers", "rho", "trials", "stages",
                     "n_nodes", "n_messages", "max_rounds", "friends"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.dbar < 0:
            raise ValueError("dbar must be non-negative")

    def rate_vector(self):
        vals = [float(v) for v in str(self.rates).split(",") if v.strip()]
        if len(vals) == 1:
            vals = vals * self.n_senders
        if len(vals) != self.n_senders:
            raise ValueError(f"{len(vals)} rates given for {self.n_senders} senders")
        return np.array(vals)

    def profile(self):
        if self.profile_file:
            return formats.read_profile_csv(self.profile_file)
        return gen_zipf_profile(self.n_senders, self.n_receivers, self.friends,
                                self.exponent, derive_seed(self.seed, "profile"))

    def constraints(self):
        return ConstraintSet(self.rho, self.dbar)

    def optimizer(self):
        return OptimizerOptions(restarts=self.restarts, seed=self.seed)


# Subcommand defaults that differ from the global ones.
COMMAND_DEFAULTS = {
    "design": {"rho": 64},
    "fig2": {"n_senders": 20, "n_receivers": 20, "dbar": 20.0, "trials": 20},
    "cascade-demo": {"n_senders": 20, "rho": 100, "dbar": 20.0},
    "theory-check": {"filters": "uniform:4"},
}

# (long-term rho, short-term rho); paper scale also forces N = 100.
FIG2_RHOS = {False: (300, 100), True: (1500, 500)}


def _coerce(field, raw):
    if field.type in (bool, "bool"):
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    kind = {"int": int, "float": float, "str": str}.get(field.type, field.type)
    return kind(raw)


def read_config_file(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string("[run]\n" + Path(path).read_text())
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def build_config(command, args):
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values = dict(COMMAND_DEFAULTS.get(command, {}))
    if args.config:
        for k, v in read_config_file(args.config).items():
            if k not in fields:
                raise ValueError(f"unknown config key {k!r}")
            values[k] = _coerce(fields[k], v)
    for k in fields:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    return ExperimentConfig(**values)


def parse_filter(spec):
    """``delta``, ``uniform:L``, ``exp:ALPHA:L`` or a characteristic file path."""
    parts = spec.split(":")
    if parts[0] == "delta":
        return DelayCharacteristic.delta(0)
    if parts[0] == "uniform" and len(parts) == 2:
        return DelayCharacteristic.uniform(int(parts[1]))
    if parts[0] == "exp" and len(parts) == 3:
        return network.exponential_mix(float(parts[1]), int(parts[2]))
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"filter file {spec} does not exist")
    return ch.load(path)


def _spectrum_rows(f, n):
    spec = ch.dft(f, n)
    return spec.power(), spec.power_db()


# -- subcommands -----------------------------------------------------------------

def cmd_design(cfg, args):
    c = cfg.constraints()
    opts = cfg.optimizer()
    if cfg.objective == "sharp0":
        res = design_long_term("near0", c, opts)
    elif cfg.objective == "sharp1":
        res = design_long_term("near1", c, opts, lags=cfg.lags)
    elif cfg.objective == "shortterm":
        res = design_short_term(cfg.n_senders, c, opts)
    elif cfg.objective in ("mc", "mc_mse"):
        ctx = DesignContext(profile=cfg.profile(), rates=cfg.rate_vector(),
                            trials=cfg.trials, mc_seed=derive_seed(cfg.seed, "design-mc"),
                            weighting=cfg.weighting)
        res = optimize_filter("mc_mse", c, opts, ctx)
    else:
        raise ValueError(f"unknown objective {cfg.objective!r}")
    # --out names the filter file when it has a suffix, else a directory.
    target = Path(cfg.out)
    if not target.suffix:
        target = target / "filter.txt"
    target.parent.mkdir(parents=True, exist_ok=True)
    ch.save(res.filter, target)
    report = target.with_name(target.stem + "_report.csv")
    formats.write_rows(report, [
        "objective", "rho", "dbar", "n_senders", "objective_value", "iterations",
        "kkt_residual", "restarts_used", "converged", "mean_delay"], [[
        res.objective, c.horizon, c.max_mean_delay, cfg.n_senders, res.objective_value,
        res.iterations, res.kkt_residual, res.restarts_used, int(res.converged),
        ch.mean_delay(res.filter)]])
    formats.write_rows(target.with_name(target.stem + "_history.csv"),
                       ["iteration", "objective"], list(enumerate(res.history)))
    log.info("wrote %s and %s", target, report)
    if not res.converged:
        log.error("optimizer did not converge within %d iterations", opts.max_iterations)
        return 1
    return 0


def _estimate_observation(cfg, args, out):
    """Least-squares estimate from a stored observation pair."""
    rates = cfg.rate_vector() if args.rates else None
    obs = formats.read_observation(args.observation, args.run_id, rates)
    f = parse_filter(cfg.filters.split(",")[0].strip())
    p_hat, cond = ls_estimate(obs, f, return_conditioning=True)
    formats.write_profile_csv(p_hat, out / f"{args.run_id}_estimate.csv")
    rows = [["rounds", obs.inputs.n_rounds], ["senders", obs.inputs.n_senders],
            ["conditioning", cond]]
    if cfg.profile_file:
        rep = empirical_mse(p_hat, cfg.profile(), obs.inputs.rates, cfg.weighting)
        rows.append(["overall_mse", rep.overall_mse])
    formats.write_rows(out / f"{args.run_id}_estimate_summary.csv", ["quantity", "value"], rows)
    return 0


def cmd_evaluate(cfg, args):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if getattr(args, "observation", None):
        return _estimate_observation(cfg, args, out)
    profile = cfg.profile()
    if profile.n_senders != cfg.n_senders:
        raise ValueError(f"profile has {profile.n_senders} senders, config says {cfg.n_senders}")
    if getattr(args, "save_observations", False):
        formats.write_profile_csv(profile, out / "profile.csv")
    lam = cfg.rate_vector()
    q = sharpness(profile)
    rows = []
    status = 0
    for k, spec in enumerate(s.strip() for s in cfg.filters.split(",") if s.strip()):
        f = parse_filter(spec)
        cf = theory.closed_form_mse(lam, q, f, cfg.rho, lags=cfg.lags)
        seed = derive_seed(cfg.seed, "evaluate", k)
        try:
            mc = mc_mse(profile, lam, f, cfg.rho, cfg.trials, seed,
                        weighting=cfg.weighting,
                        csv_path=out / f"evaluate_trials_{k}.csv")
            if getattr(args, "save_observations", False):
                # regenerates trial 0 exactly
                t0 = mc.seeds[0]
                x = gen_poisson_traffic(lam, cfg.rho, t0)
                formats.write_observation(simulate_mix(x, profile, f, t0), out, f"filter{k}")
            mean, se = mc.mean, mc.stderr
            gap = abs(mean - cf.mse_total) / cf.mse_total
        except SingularDesignError as exc:
            log.error("%s: %s", spec, exc)
            mean = se = gap = float("nan")
            status = 1
        rows.append([spec, mean, se, cf.mse_total, gap, ";".join(cf.assumption_flags)])
    formats.write_rows(out / "evaluate.csv", [
        "filter_id", "mc_mse_mean", "mc_stderr", "closed_form_mse", "relative_gap",
        "assumption_flags"], rows)
    return status


def cmd_fig2(cfg, args):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rho_long, rho_short = FIG2_RHOS[cfg.paper_scale]
    n = 100 if cfg.paper_scale else cfg.n_senders
    opts = cfg.optimizer()
    lam = np.full(n, float(cfg.rate_vector()[0]))
    designs = []
    c_long = ConstraintSet(rho_long, cfg.dbar)
    designs.append(("long_near0", rho_long, design_long_term("near0", c_long, opts), 10))
    designs.append(("long_near1", rho_long, design_long_term("near1", c_long, opts, cfg.lags), 1))
    c_short = ConstraintSet(rho_short, cfg.dbar)
    designs.append(("short", rho_short, design_short_term(n, c_short, opts), 10))

    summary = []
    for k, (name, rho, res, friends) in enumerate(designs):
        f = res.filter
        formats.write_rows(out / f"fig2_{name}_taps.csv", ["k", "tap"], list(enumerate(f.taps)))
        power, db = _spectrum_rows(f, rho)
        band = np.where(theory.stopband(n, rho), "stop", "pass") if name == "short" else None
        formats.write_rows(out / f"fig2_{name}_spectrum.csv", ["k", "power", "power_db", "band"], [
            [i, power[i], db[i], band[i] if band is not None else ""] for i in range(rho)])
        profile = gen_zipf_profile(n, n, min(friends, n), cfg.exponent,
                                   derive_seed(cfg.seed, "fig2-profile", k))
        mc = mc_mse(profile, lam, f, rho, cfg.trials, derive_seed(cfg.seed, "fig2", k),
                    weighting=cfg.weighting)
        summary.append([name, rho, n, ch.mean_delay(f), res.objective, res.objective_value,
                        mc.mean, mc.stderr])
    formats.write_rows(out / "fig2_summary.csv", [
        "design", "rho", "n_senders", "mean_delay", "objective", "objective_value",
        "mc_mse_mean", "mc_stderr"], summary)
    return 0


def cmd_cascade_demo(cfg, args):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    target = design_short_term(cfg.n_senders, cfg.constraints(), cfg.optimizer()).filter.trimmed()
    length = cfg.per_stage_len or -(-(target.length - 1) // cfg.stages) + 1
    dec = network.decompose_cascade(target, cfg.stages, length, seed=cfg.seed)
    _, baseline = network.truncation_baseline(target, length)
    network.save_stages(dec.stages, out / "stages")

    n = max(cfg.rho, dec.achieved.length)
    product = np.ones(n, dtype=complex)
    for s in dec.stages:
        product *= ch.dft(s, n).coefficients
    identity_err = float(np.max(np.abs(ch.dft(dec.achieved, n).coefficients - product)))

    taps_t = target.padded(n)
    taps_a = dec.achieved.padded(n)
    formats.write_rows(out / "cascade_taps.csv", ["k", "objective", "achieved"],
                       [[k, taps_t[k], taps_a[k]] for k in range(n)])
    cols = [ch.dft(target, n).power_db(), ch.dft(dec.achieved, n).power_db()]
    cols += [ch.dft(s, n).power_db() for s in dec.stages]
    header = ["k", "objective_db", "achieved_db"] + [f"stage{i}_db" for i in range(len(dec.stages))]
    formats.write_rows(out / "cascade_spectrum.csv", header,
                       [[k] + [c[k] for c in cols] for k in range(n)])
    formats.write_rows(out / "cascade_summary.csv", [
        "stages", "per_stage_len", "achieved_error", "baseline_error", "spectral_identity_err",
        "achieved_sum"], [[cfg.stages, length, dec.error, baseline, identity_err,
                           float(dec.achieved.taps.sum())]])
    return 0


def cmd_expmix_demo(cfg, args):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = derive_seed(cfg.seed, "expmix")
    one = network.simulate_decentralized(1, cfg.alpha, cfg.n_messages, cfg.max_rounds, seed)
    many = network.simulate_decentralized(cfg.n_nodes, cfg.alpha, cfg.n_messages,
                                          cfg.max_rounds, seed)
    analytic = network.exponential_mix(cfg.alpha, cfg.max_rounds + 1).taps
    formats.write_histogram_csv(one, out / "expmix_hist_centralized.csv")
    formats.write_histogram_csv(many, out / "expmix_hist_decentralized.csv")
    rows = [
        ["centralized_vs_analytic", network.total_variation(one.pmf(), analytic)],
        ["decentralized_vs_analytic", network.total_variation(many.pmf(), analytic)],
        ["decentralized_vs_centralized", network.total_variation(many.pmf(), one.pmf())],
        ["centralized_mean", one.mean()[0]],
        ["decentralized_mean", many.mean()[0]],
        ["analytic_mean", (1 - cfg.alpha) / cfg.alpha],
    ]
    formats.write_rows(out / "expmix_summary.csv", ["quantity", "value"], rows)
    return 0


def cmd_theory_check(cfg, args):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    f = parse_filter(cfg.filters.split(",")[0].strip())
    rep = theory.closed_form_mse(cfg.rate_vector(), sharpness(cfg.profile()), f, cfg.rho,
                                 lags=cfg.lags)
    (out / "theory_check.txt").write_text(rep.to_text())
    return 0


COMMANDS = {
    "design": cmd_design,
    "evaluate": cmd_evaluate,
    "fig2": cmd_fig2,
    "cascade-demo": cmd_cascade_demo,
    "expmix-demo": cmd_expmix_demo,
    "theory-check": cmd_theory_check,
}


def make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--trials", type=int)
    common.add_argument("--n-senders", dest="n_senders", type=int)
    common.add_argument("--n-receivers", dest="n_receivers", type=int)
    common.add_argument("--rho", type=int)
    common.add_argument("--dbar", type=float)
    common.add_argument("--rates", help="one rate, or a comma list (one per sender)")
    common.add_argument("--friends", type=int)
    common.add_argument("--exponent", type=float)
    common.add_argument("--weighting", choices=["rate_squared", "rate"])
    common.add_argument("--lags", choices=["all", "nonnegative"])
    common.add_argument("--restarts", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="timedmix", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common])
    p.add_argument("--objective", choices=["sharp0", "sharp1", "shortterm", "mc"])

    p = sub.add_parser("evaluate", parents=[common])
    p.add_argument("--filters", help="comma list: delta, uniform:L, exp:A:L or file paths")
    p.add_argument("--profile-file", dest="profile_file", help="profile CSV instead of Zipf")
    p.add_argument("--save-observations", action="store_true",
                   help="also write trial 0 of each filter as <out>/filter<k>_{inputs,outputs}.csv")
    p.add_argument("--observation", metavar="DIR",
                   help="estimate from <DIR>/<run-id>_{inputs,outputs}.csv instead of simulating")
    p.add_argument("--run-id", default="run")

    p = sub.add_parser("fig2", parents=[common])
    p.add_argument("--paper-scale", dest="paper_scale", action="store_true", default=None)

    p = sub.add_parser("cascade-demo", parents=[common])
    p.add_argument("--stages", type=int)
    p.add_argument("--per-stage-len", dest="per_stage_len", type=int)

    p = sub.add_parser("expmix-demo", parents=[common])
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-nodes", dest="n_nodes", type=int)
    p.add_argument("--n-messages", dest="n_messages", type=int)
    p.add_argument("--max-rounds", dest="max_rounds", type=int)

    p = sub.add_parser("theory-check", parents=[common])
    p.add_argument("--filters", help="filter spec (first entry is used)")
    p.add_argument("--profile-file", dest="profile_file", help="profile CSV instead of Zipf")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s: %(message)s")
    try:
        cfg = build_config(args.command, args)
        return COMMANDS[args.command](cfg, args)
    except (ValueError, FileNotFoundError, np.linalg.LinAlgError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
