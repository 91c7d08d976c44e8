/** Pure derived display state.
 *
 * Everything here is a rearrangement of server-provided values for
 * rendering — no statistics, no curve math.  The only arithmetic allowed
 * anywhere near curve numbers is the display-only day-axis conversion
 * (tau times a server-provided D), which lives in chart.ts.
 */

import type { DelphiView, SessionView } from "./api.js";

export function stageBanner(view: SessionView): string {
  if (view.stage === "delphi") {
    const d = view.delphi;
    const round = d ? d.round : 1;
    const pending = d ? d.pending_count : 0;
    return `Delphi round ${round} — ${pending}/${view.roster.length} estimates in`;
  }
  if (view.stage === "fitted") {
    return "Curve fitted — review or revise";
  }
  return "Collecting time estimates";
}

/** Per-expert completeness: which scheme levels each expert has filled. */
export function completenessGrid(
  view: SessionView,
): { expertId: string; name: string; filled: boolean[] }[] {
  const byExpert = new Map<string, Set<number>>();
  for (const row of view.estimates) {
    let set = byExpert.get(row.expert_id);
    if (!set) {
      set = new Set();
      byExpert.set(row.expert_id, set);
    }
    set.add(row.level);
  }
  return view.roster.map((entry) => ({
    expertId: entry.expert_id,
    name: entry.name,
    filled: view.scheme.levels.map(
      (lv) => byExpert.get(entry.expert_id)?.has(lv) ?? false,
    ),
  }));
}

/** The estimate grid's current server-side values, expert x level. */
export function estimateTable(
  view: SessionView,
): Map<string, Map<number, number>> {
  const table = new Map<string, Map<number, number>>();
  for (const row of view.estimates) {
    let inner = table.get(row.expert_id);
    if (!inner) {
      inner = new Map();
      table.set(row.expert_id, inner);
    }
    inner.set(row.level, row.time_days);
  }
  return table;
}

export interface SpreadGauge {
  round: number;
  stats: { min: number; median: number; max: number; spread: number } | null;
  withinTolerance: boolean;
  tolerance: number;
  prompt: string;
}

/** Display state for the Delphi spread gauge, from the last round. */
export function spreadGauge(delphi: DelphiView): SpreadGauge {
  const last = delphi.rounds.length
    ? delphi.rounds[delphi.rounds.length - 1]!
    : null;
  const within = delphi.status === "consensus";
  let prompt: string;
  if (!last) {
    prompt = "Collect everyone's D estimate to complete the round.";
  } else if (within) {
    prompt = "Consensus reached.";
  } else {
    prompt = "Spread still above tolerance — ask the experts to revise.";
  }
  return {
    round: delphi.round,
    stats: last,
    withinTolerance: within,
    tolerance: delphi.tolerance,
    prompt,
  };
}

/** Indices of grid cells that break strict monotonicity, skips allowed.
 *
 * `values[i]` is the entered time for level i (null = skipped).  Both
 * cells of each offending adjacent pair are flagged, mirroring how the
 * service reports the violation.  This checks facilitator INPUT before
 * submission; it never touches fitted-curve numbers.
 */
export function nonMonotoneCells(values: (number | null)[]): Set<number> {
  const flagged = new Set<number>();
  let prevIdx = -1;
  values.forEach((value, idx) => {
    if (value === null) return;
    if (prevIdx >= 0 && value <= (values[prevIdx] as number)) {
      flagged.add(prevIdx);
      flagged.add(idx);
    }
    prevIdx = idx;
  });
  return flagged;
}

/** Elicited points for the chart, normalized by a server-provided D.
 *
 * Returns null when no consensus D exists (per-expert D values are not
 * exposed by the API, so there is nothing to normalize against).  The
 * division is the inverse of the day-axis display transform.
 */
export function elicitedPoints(
  view: SessionView,
): { tau: number; level: number }[] | null {
  const d = view.delphi?.consensus_D ?? null;
  if (d === null) return null;
  return view.estimates.map((row) => ({
    tau: Math.min(row.time_days / d, 1.0),
    level: row.level,
  }));
}
