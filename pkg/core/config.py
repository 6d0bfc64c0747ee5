# core/config.py - Omega Provisioner INI configuration
"""
Parses the provisioner's INI file into a typed ProvisionerConfig.

The file is the one handed to the provisioner pod as a configmap:

    [DEFAULT]
    k8s_domain=nrp-nautilus.io
    [k8s]
    tolerations_list=nautilus.io/noceph, nautilus.io/suncave
    node_affinity_dict=^nautilus.io/low-power:true,gpu-type:A100|A40|V100
    priority_class=opportunistic
    envs_dict=USE_SINGULARITY:no,GLIDEIN_Site:SDSC-PRP

Keys in [k8s] override [DEFAULT]. Unknown keys are logged and ignored.
"""

import configparser
import io
import logging
import re
from dataclasses import dataclass
from typing import Dict, List, Tuple

from core.errors import FilterSyntax, InvalidValue, MalformedIni
from core.model import MATCH_ALL, AffinityRule, FilterClause, FilterExpr, FilterOp

logger = logging.getLogger(__name__)

SECTION = "k8s"

DEFAULT_PRIORITY_TABLE = {"opportunistic": 100, "normal": 1000, "system": 10000}

INT_KEYS = (
    "mem_quantum_mib",
    "disk_quantum_mib",
    "cycle_interval_s",
    "idle_timeout_s",
    "max_submit_per_cycle",
    "max_pods_per_group",
    "max_total_pods",
    "completed_pod_ttl_s",
)

STRING_KEYS = ("k8s_domain", "namespace", "image", "priority_class", "secret_name", "central_manager")

KNOWN_KEYS = frozenset(STRING_KEYS + INT_KEYS + ("tolerations_list", "node_affinity_dict", "envs_dict", "filter"))


@dataclass(frozen=True)
class ProvisionerConfig:
    k8s_domain: str = ""
    namespace: str = "default"
    image: str = "htcondor/execute:latest"
    priority_class: str = "normal"
    priority_table: Tuple[Tuple[str, int], ...] = tuple(sorted(DEFAULT_PRIORITY_TABLE.items()))
    tolerations: Tuple[str, ...] = ()
    affinity: Tuple[AffinityRule, ...] = ()
    env: Tuple[Tuple[str, str], ...] = ()
    secret_name: str = "htcondor-pool-credentials"
    central_manager: str = ""
    filter: FilterExpr = MATCH_ALL
    mem_quantum_mib: int = 1024
    disk_quantum_mib: int = 1024
    cycle_interval_s: int = 60
    idle_timeout_s: int = 600
    max_submit_per_cycle: int = 50
    max_pods_per_group: int = 1000
    max_total_pods: int = 5000
    completed_pod_ttl_s: int = 3600

    def priority_of(self, class_name: str):
        return dict(self.priority_table).get(class_name)


# --- Value parsers ---

def _parse_list(key: str, raw: str) -> Tuple[str, ...]:
    if not raw.strip():
        return ()
    items = [item.strip() for item in raw.split(",")]
    if any(not item for item in items):
        raise InvalidValue(f"{key}: empty element in {raw!r}")
    return tuple(items)


def _parse_env(raw: str) -> Tuple[Tuple[str, str], ...]:
    pairs = []
    for item in _parse_list("envs_dict", raw):
        name, sep, value = item.partition(":")
        if not sep or not name.strip():
            raise InvalidValue(f"envs_dict: expected NAME:value, got {item!r}")
        pairs.append((name.strip(), value.strip()))
    return tuple(pairs)


def parse_affinity_entry(entry: str) -> AffinityRule:
    """'^key:v1|v2' -> AffinityRule. A leading '^' negates the match."""
    text = entry.strip()
    negated = text.startswith("^")
    if negated:
        text = text[1:]
    key, sep, rest = text.partition(":")
    key = key.strip()
    if not sep:
        raise InvalidValue(f"node_affinity_dict: missing ':' in {entry!r}")
    if not key:
        raise InvalidValue(f"node_affinity_dict: empty key in {entry!r}")
    values = tuple(v.strip() for v in rest.split("|"))
    if not values or any(not v for v in values):
        raise InvalidValue(f"node_affinity_dict: empty value in {entry!r}")
    return AffinityRule(key=key, values=values, negated=negated)


_AND_SPLIT = re.compile(r"(?:^|\s+)AND(?:\s+|$)")
_BINARY_CLAUSE = re.compile(r"^([^\s=!<>]+)\s*(==|!=|>=|<=)\s*(\S+)$")
_IN_CLAUSE = re.compile(r"^(\S+)\s+IN\s+(\S+)$")


def _parse_clause(text: str) -> FilterClause:
    m = _IN_CLAUSE.match(text)
    if m:
        values = tuple(m.group(2).split("|"))
        if any(not v for v in values):
            raise FilterSyntax(f"empty value in IN set: {text!r}")
        return FilterClause(m.group(1), FilterOp.IN, values)
    m = _BINARY_CLAUSE.match(text)
    if m:
        return FilterClause(m.group(1), FilterOp(m.group(2)), m.group(3))
    raise FilterSyntax(f"unknown operator or malformed clause: {text!r}")


def parse_filter(text: str) -> FilterExpr:
    """clause ("AND" clause)*, clause := name OP value. Blank text is match-all."""
    stripped = (text or "").strip()
    if not stripped:
        return MATCH_ALL
    parts = _AND_SPLIT.split(stripped)
    if any(not p.strip() for p in parts):
        raise FilterSyntax(f"dangling AND in filter {text!r}")
    return FilterExpr(tuple(_parse_clause(p.strip()) for p in parts))


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise InvalidValue(f"{key}: expected an integer, got {raw!r}")


def _validate(config: ProvisionerConfig):
    for key in ("cycle_interval_s", "completed_pod_ttl_s", "max_submit_per_cycle",
                "max_pods_per_group", "max_total_pods"):
        if getattr(config, key) <= 0:
            raise InvalidValue(f"{key}: must be > 0, got {getattr(config, key)}")
    # 0 means terminate as soon as the slot is idle and nothing is queued
    if config.idle_timeout_s < 0:
        raise InvalidValue(f"idle_timeout_s: must be >= 0, got {config.idle_timeout_s}")
    for key in ("mem_quantum_mib", "disk_quantum_mib"):
        if getattr(config, key) < 1:
            raise InvalidValue(f"{key}: must be >= 1, got {getattr(config, key)}")
    if config.priority_of(config.priority_class) is None:
        raise InvalidValue(
            f"priority_class: unknown class {config.priority_class!r} "
            f"(known: {', '.join(name for name, _ in config.priority_table)})"
        )


def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        interpolation=None,
        strict=False,
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=None,
    )
    parser.optionxform = str
    return parser


def parse_ini(text: str) -> ProvisionerConfig:
    parser = _new_parser()
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise MalformedIni(f"line {e.lineno}: key=value outside any section: {e.line.strip()!r}")
    except configparser.ParsingError as e:
        lines = ", ".join(f"line {lineno}: {line.strip()!r}" for lineno, line in e.errors)
        raise MalformedIni(f"unparsable lines ({lines})")
    except configparser.Error as e:
        raise MalformedIni(str(e))

    for section in parser.sections():
        if section != SECTION:
            logger.warning(f"[Config] Ignoring unknown section [{section}]")

    raw: Dict[str, str] = dict(parser[SECTION]) if parser.has_section(SECTION) else dict(parser.defaults())

    values = {}
    for key, value in raw.items():
        if key not in KNOWN_KEYS:
            logger.warning(f"[Config] Ignoring unknown key '{key}'")
            continue
        if key in STRING_KEYS:
            values[key] = value.strip()
        elif key in INT_KEYS:
            values[key] = _parse_int(key, value)
        elif key == "tolerations_list":
            values["tolerations"] = _parse_list(key, value)
        elif key == "node_affinity_dict":
            values["affinity"] = tuple(parse_affinity_entry(e) for e in _parse_list(key, value))
        elif key == "envs_dict":
            values["env"] = _parse_env(value)
        elif key == "filter":
            values["filter"] = parse_filter(value)

    config = ProvisionerConfig(**values)
    _validate(config)
    if not config.central_manager:
        logger.warning("[Config] central_manager is empty; pods will not be told where the pool lives")
    return config


def load_config(path: str) -> ProvisionerConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_ini(f.read())


def render_ini(config: ProvisionerConfig) -> str:
    """Serialize a config back to INI. parse_ini(render_ini(c)) == c."""
    parser = _new_parser()
    parser["DEFAULT"] = {"k8s_domain": config.k8s_domain}
    section: Dict[str, str] = {
        "namespace": config.namespace,
        "image": config.image,
        "priority_class": config.priority_class,
        "tolerations_list": ",".join(config.tolerations),
        "node_affinity_dict": ",".join(rule.render() for rule in config.affinity),
        "envs_dict": ",".join(f"{name}:{value}" for name, value in config.env),
        "secret_name": config.secret_name,
        "central_manager": config.central_manager,
        "filter": config.filter.render(),
    }
    for key in INT_KEYS:
        section[key] = str(getattr(config, key))
    parser[SECTION] = section

    buf = io.StringIO()
    parser.write(buf, space_around_delimiters=False)
    return buf.getvalue()


def describe(config: ProvisionerConfig) -> List[str]:
    """Short human summary lines, used by the validate command."""
    priority = config.priority_of(config.priority_class)
    return [
        f"# priority {config.priority_class} resolves to {priority}",
        f"# {len(config.tolerations)} tolerations, {len(config.affinity)} affinity rules, {len(config.env)} env entries",
        f"# filter: {config.filter.render() or '(match-all)'}",
    ]

