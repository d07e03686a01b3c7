"""Choreography security analyzer over abstract strand spaces."""

from .terms import (Box, Label, Message, Role, Value, apply_subst, box,
                    contains, found_only_within, found_outside, match_term,
                    msg, parse_message, parse_term, render_message,
                    render_term)
from .choreo import Spec, parse, top, knows, well_formed
from .semantics import (DirectedTerm, StrandInstance, StrandSpace,
                        StrandTemplate, compile_spec, instantiate, make_space,
                        recv, send)
from .skeleton import (Cut, NodeId, Skeleton, canonical_b, canonical_key, cut,
                       cut_solved, embeds, is_dg, is_realized,
                       is_realized_cutcheck, isomorphic, new_skeleton,
                       union_up)
from .penetrator import Knowledge, analyze, derivable
from .search import (Bounds, SearchResult, Step, a1_steps, a2_steps,
                     apply_step, brute_force_min_dg_realized, shapes)

__all__ = [name for name in dir() if not name.startswith("_")]
