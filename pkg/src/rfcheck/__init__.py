"""Reads-from consistency checking and stateless exploration for
store-buffer memory models (SC via fence encoding, TSO, PSO)."""

from .closure import ClosureOrder, compute_closure, respects
from .events import (Event, Instance, MalformedInstance, Op, TwoPhaseWrite,
                     build_instance, build_program_order, instance_from_json,
                     instance_to_json, is_lower_set, validate_instance)
from .explore import ExploreStats, Schedule, explore
from .machine import (NotLowerSet, Trace, extend, is_well_formed, rf_of_trace)
from .oracle import CapExceeded, RfClass, oracle_realizable, oracle_rf_classes
from .program import (Program, Run, enabled_events, maximal_extension,
                      parse_program)
from .pso import (fence_map, is_spurious, naive_verify_pso, pending_writes,
                  pso_executable, verify_pso)
from .tso import SearchStats, naive_verify_tso, tso_executable, verify_tso

__all__ = [
    "ClosureOrder", "compute_closure", "respects",
    "Event", "Instance", "MalformedInstance", "Op", "TwoPhaseWrite",
    "build_instance", "build_program_order", "instance_from_json",
    "instance_to_json", "is_lower_set", "validate_instance",
    "ExploreStats", "Schedule", "explore",
    "NotLowerSet", "Trace", "extend", "is_well_formed", "rf_of_trace",
    "CapExceeded", "RfClass", "oracle_realizable", "oracle_rf_classes",
    "Program", "Run", "enabled_events", "maximal_extension", "parse_program",
    "fence_map", "is_spurious", "naive_verify_pso", "pending_writes",
    "pso_executable", "verify_pso",
    "SearchStats", "naive_verify_tso", "tso_executable", "verify_tso",
]
