"""TOML config files and command-line overrides for the experiment harness.

Boundary units are human-facing (positions in meters, orientations in
radians, powers in dBm, frequencies in Hz, noise PSD in dBm/Hz); everything
is converted to SI on load.  Unknown sections or keys are rejected so typos
fail loudly.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .geometry import AngleVector, SceneGeometry
from .harness import ExperimentConfig

_SECTIONS = ("scene", "spoof", "arrays", "radio", "estimator", "experiment")

_KEYS = {
    "scene": {"bs_position", "bs_orientation", "ue_position", "ue_orientation", "scatterers"},
    "spoof": {
        "ue_position",
        "ue_orientation",
        "scatterers",
        "target_aoa",
        "target_aod",
        "p_max",
        "init_seed",
        "max_iters",
        "tol",
    },
    "arrays": {"n_rx", "n_tx", "n_combiners", "n_precoders"},
    "radio": {"carrier_freq_hz", "bandwidth_hz", "noise_psd_dbm_per_hz", "reflection_factor"},
    "estimator": {"grid_step_deg", "min_separation_cells"},
    "experiment": {
        "mode",
        "power_grid_dbm",
        "rate_power_grid_dbm",
        "trials",
        "base_seed",
        "variation",
        "snr_reference",
        "use_nominal_comm_precoder",
        "probe_power_dbm",
        "probe_noiseless",
    },
}


def load_config_file(path) -> dict:
    """Parse a TOML config file into a nested dict, validating the schema."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    _validate_schema(data)
    return data


def _validate_schema(data: dict):
    for section, content in data.items():
        if section not in _SECTIONS:
            raise ConfigError(
                f"unknown config section [{section}]; expected one of {', '.join(_SECTIONS)}"
            )
        if not isinstance(content, dict):
            raise ConfigError(f"[{section}] must be a table of key = value entries")
        unknown = set(content) - _KEYS[section]
        if unknown:
            raise ConfigError(
                f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}"
            )


def _parse_override_value(text: str):
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text  # bare words (e.g. mode=no_spoof) are strings


def apply_overrides(data: dict, overrides) -> dict:
    """Apply key=value override strings on top of a parsed config dict.

    Keys may be dotted (``experiment.trials``) or bare (``trials``) when
    unambiguous across sections.  Values are parsed as TOML literals, with
    bare words treated as strings.  Returns a new dict.
    """
    result = {section: dict(content) for section, content in data.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        value = _parse_override_value(raw.strip())
        if "." in key:
            section, _, name = key.partition(".")
            if section not in _SECTIONS or name not in _KEYS.get(section, set()):
                raise ConfigError(f"override targets unknown key {key!r}")
        else:
            homes = [s for s in _SECTIONS if key in _KEYS[s]]
            if not homes:
                raise ConfigError(f"override targets unknown key {key!r}")
            if len(homes) > 1:
                raise ConfigError(
                    f"override key {key!r} is ambiguous ({' and '.join(homes)}); use section.key"
                )
            section, name = homes[0], key
        result.setdefault(section, {})[name] = value
    _validate_schema(result)
    return result


def _position(section: dict, key: str, fallback):
    value = section.get(key, fallback)
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2,):
        raise ConfigError(f"{key} must be a 2-D point [x, y], got {value!r}")
    return arr


def _scatterers(section: dict, fallback):
    value = section.get("scatterers", fallback)
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError("scatterers must be a list of 2-D points [[x, y], ...]")
    return arr


def build_experiment(data: dict) -> ExperimentConfig:
    """Turn a validated config dict into an ExperimentConfig (SI units inside)."""
    defaults = ExperimentConfig()
    scene_t = data.get("scene", {})
    spoof_t = data.get("spoof", {})
    arrays = data.get("arrays", {})
    radio = data.get("radio", {})
    est = data.get("estimator", {})
    exp = data.get("experiment", {})

    try:
        scene = SceneGeometry(
            bs_position=_position(scene_t, "bs_position", defaults.scene.bs_position),
            ue_position=_position(scene_t, "ue_position", defaults.scene.ue_position),
            bs_orientation=float(scene_t.get("bs_orientation", defaults.scene.bs_orientation)),
            ue_orientation=float(scene_t.get("ue_orientation", defaults.scene.ue_orientation)),
            scatterer_positions=_scatterers(scene_t, defaults.scene.scatterer_positions),
        )

        target_scene = defaults.target_scene
        target_angles = None
        if "target_aoa" in spoof_t or "target_aod" in spoof_t:
            if not ("target_aoa" in spoof_t and "target_aod" in spoof_t):
                raise ConfigError("target_aoa and target_aod must be given together")
            target_angles = AngleVector(
                aoa=np.asarray(spoof_t["target_aoa"], dtype=float),
                aod=np.asarray(spoof_t["target_aod"], dtype=float),
            )
            target_scene = None
        elif spoof_t:
            target_scene = SceneGeometry(
                bs_position=scene.bs_position,
                ue_position=_position(spoof_t, "ue_position", defaults.target_scene.ue_position),
                bs_orientation=scene.bs_orientation,
                ue_orientation=float(
                    spoof_t.get("ue_orientation", defaults.target_scene.ue_orientation)
                ),
                scatterer_positions=_scatterers(
                    spoof_t, defaults.target_scene.scatterer_positions
                ),
            )

        noise_psd = defaults.noise_psd
        if "noise_psd_dbm_per_hz" in radio:
            noise_psd = 10.0 ** (float(radio["noise_psd_dbm_per_hz"]) / 10.0) * 1e-3

        config = ExperimentConfig(
            scene=scene,
            target_scene=target_scene,
            target_angles=target_angles,
            n_rx_antennas=int(arrays.get("n_rx", defaults.n_rx_antennas)),
            n_tx_antennas=int(arrays.get("n_tx", defaults.n_tx_antennas)),
            n_combiners=int(arrays.get("n_combiners", defaults.n_combiners)),
            n_precoders=int(arrays.get("n_precoders", defaults.n_precoders)),
            carrier_freq=float(radio.get("carrier_freq_hz", defaults.carrier_freq)),
            bandwidth=float(radio.get("bandwidth_hz", defaults.bandwidth)),
            noise_psd=noise_psd,
            power_grid_dbm=tuple(exp.get("power_grid_dbm", defaults.power_grid_dbm)),
            rate_power_grid_dbm=(
                tuple(exp["rate_power_grid_dbm"]) if "rate_power_grid_dbm" in exp else None
            ),
            trials=int(exp.get("trials", defaults.trials)),
            grid_step_deg=float(est.get("grid_step_deg", defaults.grid_step_deg)),
            base_seed=int(exp.get("base_seed", defaults.base_seed)),
            mode=str(exp.get("mode", defaults.mode)),
            reflection_factor=float(radio.get("reflection_factor", defaults.reflection_factor)),
            p_max=float(spoof_t["p_max"]) if "p_max" in spoof_t else None,
            spoof_init_seed=int(spoof_t["init_seed"]) if "init_seed" in spoof_t else None,
            spoof_max_iters=int(spoof_t.get("max_iters", defaults.spoof_max_iters)),
            spoof_tol=float(spoof_t.get("tol", defaults.spoof_tol)),
            min_separation=float(est.get("min_separation_cells", defaults.min_separation)),
            variation=str(exp.get("variation", defaults.variation)),
            snr_reference=str(exp.get("snr_reference", defaults.snr_reference)),
            use_nominal_comm_precoder=bool(
                exp.get("use_nominal_comm_precoder", defaults.use_nominal_comm_precoder)
            ),
            probe_power_dbm=float(exp.get("probe_power_dbm", defaults.probe_power_dbm)),
            probe_noiseless=bool(exp.get("probe_noiseless", defaults.probe_noiseless)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return config


def config_to_dict(config: ExperimentConfig) -> dict:
    """Serialize an ExperimentConfig back to the config-file schema (boundary units)."""
    data = {
        "scene": {
            "bs_position": config.scene.bs_position,
            "bs_orientation": config.scene.bs_orientation,
            "ue_position": config.scene.ue_position,
            "ue_orientation": config.scene.ue_orientation,
            "scatterers": config.scene.scatterer_positions,
        },
        "arrays": {
            "n_rx": config.n_rx_antennas,
            "n_tx": config.n_tx_antennas,
            "n_combiners": config.n_combiners,
            "n_precoders": config.n_precoders,
        },
        "radio": {
            "carrier_freq_hz": config.carrier_freq,
            "bandwidth_hz": config.bandwidth,
            "noise_psd_dbm_per_hz": 10.0 * math.log10(config.noise_psd * 1e3),
            "reflection_factor": config.reflection_factor,
        },
        "estimator": {
            "grid_step_deg": config.grid_step_deg,
            "min_separation_cells": config.min_separation,
        },
        "experiment": {
            "mode": config.mode,
            "power_grid_dbm": list(config.power_grid_dbm),
            "trials": config.trials,
            "base_seed": config.base_seed,
            "variation": config.variation,
            "snr_reference": config.snr_reference,
            "use_nominal_comm_precoder": config.use_nominal_comm_precoder,
            "probe_power_dbm": config.probe_power_dbm,
            "probe_noiseless": config.probe_noiseless,
        },
    }
    if config.rate_power_grid_dbm is not None:
        data["experiment"]["rate_power_grid_dbm"] = list(config.rate_power_grid_dbm)
    spoof = {
        "max_iters": config.spoof_max_iters,
        "tol": config.spoof_tol,
    }
    if config.p_max is not None:
        spoof["p_max"] = config.p_max
    if config.spoof_init_seed is not None:
        spoof["init_seed"] = config.spoof_init_seed
    if config.target_angles is not None:
        spoof["target_aoa"] = config.target_angles.aoa
        spoof["target_aod"] = config.target_angles.aod
    elif config.target_scene is not None:
        spoof["ue_position"] = config.target_scene.ue_position
        spoof["ue_orientation"] = config.target_scene.ue_orientation
        spoof["scatterers"] = config.target_scene.scatterer_positions
    data["spoof"] = spoof
    return data


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_scalar(v) for v in np.asarray(value).tolist()) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__} to TOML")


def write_effective_config(data: dict, path):
    """Echo the post-override config dict as TOML for reproducibility."""
    lines = []
    for section in _SECTIONS:
        if section not in data:
            continue
        lines.append(f"[{section}]")
        for key in sorted(data[section]):
            lines.append(f"{key} = {_toml_scalar(data[section][key])}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
