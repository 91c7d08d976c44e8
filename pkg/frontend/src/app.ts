/** Facilitator app: create a session, enroll experts, run the Delphi
 * round, collect the estimate grid, fit, and review the curve.
 *
 * All statistics arrive from the service; this module is wiring and
 * rendering only.  Mutations send the last-seen version so concurrent
 * edits surface as a reload prompt instead of silent overwrites.
 */

import {
  ApiClient,
  ApiError,
  type CurveSummary,
  type FetchLike,
  type SessionView,
} from "./api.js";
import { renderBandChart } from "./chart.js";
import {
  completenessGrid,
  elicitedPoints,
  nonMonotoneCells,
  spreadGauge,
  stageBanner,
} from "./views.js";

export interface AppOptions {
  fetchImpl?: FetchLike;
  pollMs?: number;
}

export interface AppHandle {
  /** Settles when every queued action (clicks, polls) has finished. */
  idle(): Promise<void>;
  /** Force one refresh of the session view. */
  refresh(): Promise<void>;
  stop(): void;
}

function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function levelLabel(level: number): string {
  return `${(level * 100).toFixed(0)}%`;
}

export function startApp(
  root: HTMLElement,
  options: AppOptions = {},
): AppHandle {
  const client = new ApiClient(options.fetchImpl);
  const pollMs = options.pollMs ?? 2000;

  let view: SessionView | null = null;
  let cachedFit: {
    summary: CurveSummary;
    noiseSource: string;
    version: number;
  } | null = null;
  let dayAxis = false;
  let conflict = false;

  // Serialized action queue so tests (and the poller) can await quiescence.
  let pending: Promise<void> = Promise.resolve();
  function run(task: () => Promise<void>): void {
    pending = pending.then(task, task);
  }

  function find<T extends Element>(selector: string): T | null {
    return root.querySelector<T>(selector);
  }

  function setError(selector: string, message: string): void {
    const span = find<HTMLElement>(selector);
    if (span) span.textContent = message;
  }

  function handleFailure(err: unknown, errorSelector: string): void {
    if (err instanceof ApiError && err.status === 409) {
      conflict = true;
      render();
      return;
    }
    const message =
      err instanceof ApiError ? err.message : "request failed — try again";
    render();
    setError(errorSelector, message);
  }

  async function pullView(): Promise<void> {
    if (!view) return;
    const fresh = await client.getSession(view.session_id);
    const changed = fresh.version !== view.version;
    view = fresh;
    if (fresh.fitted) {
      cachedFit = {
        summary: fresh.fitted.summary,
        noiseSource: fresh.fitted.noise_source,
        version: fresh.fitted.version,
      };
    }
    if (changed) render();
  }

  async function mutate(
    action: () => Promise<unknown>,
    errorSelector: string,
  ): Promise<void> {
    try {
      await action();
      await pullView();
      render();
    } catch (err) {
      handleFailure(err, errorSelector);
    }
  }

  // ----- drafts survive re-renders -------------------------------------
  function snapshotDrafts(): Map<string, string> {
    const drafts = new Map<string, string>();
    for (const input of root.querySelectorAll<HTMLInputElement>(
      "input[data-keep]",
    )) {
      if (input.value !== "") drafts.set(input.dataset["keep"]!, input.value);
    }
    return drafts;
  }

  function restoreDrafts(drafts: Map<string, string>): void {
    for (const input of root.querySelectorAll<HTMLInputElement>(
      "input[data-keep]",
    )) {
      const kept = drafts.get(input.dataset["keep"]!);
      if (kept !== undefined && input.value === "") input.value = kept;
    }
  }

  // ----- create screen ---------------------------------------------------
  function renderCreate(): void {
    const levels = h("input", {
      id: "create-levels",
      "data-keep": "create-levels",
      value: "0.1, 0.3, 0.5, 0.7, 0.9",
    });
    const policy = h(
      "select",
      { id: "create-dpolicy" },
      h("option", { value: "consensus" }, "Delphi consensus D"),
      h("option", { value: "per_expert" }, "Per-expert D"),
    );
    const button = h("button", { id: "create-btn" }, "Start session");
    button.addEventListener("click", () => {
      const raw = levels.value
        .split(",")
        .map((part) => part.trim())
        .filter((part) => part !== "");
      const parsed = raw.map(Number);
      if (!parsed.length || parsed.some((v) => !Number.isFinite(v))) {
        setError("#create-error", "levels must be comma-separated numbers");
        return;
      }
      run(() =>
        mutate(async () => {
          const created = await client.createSession({
            levels: parsed,
            d_policy: policy.value as "consensus" | "per_expert",
          });
          view = await client.getSession(created.session_id);
        }, "#create-error"),
      );
    });
    root.append(
      h(
        "section",
        { id: "create-panel" },
        h("h1", {}, "Recovery workshop"),
        h("p", {}, "Recovery levels to elicit (fractions of full function):"),
        h("label", { for: "create-levels" }, "Levels "),
        levels,
        h("label", { for: "create-dpolicy" }, " Horizon policy "),
        policy,
        button,
        h("span", { class: "inline-error", id: "create-error" }),
      ),
    );
  }

  // ----- session screens ---------------------------------------------------
  function renderHeader(v: SessionView): void {
    root.append(
      h(
        "header",
        {},
        h("h1", {}, "Recovery workshop"),
        h(
          "div",
          { id: "session-meta" },
          "Session ",
          h("code", { id: "session-id" }, v.session_id),
          ` · v${v.version}`,
        ),
        h("div", { id: "stage-banner" }, stageBanner(v)),
      ),
    );
    if (conflict) {
      const reload = h("button", { id: "reload-btn" }, "Reload latest");
      reload.addEventListener("click", () => {
        run(async () => {
          try {
            conflict = false;
            await pullView();
            render();
          } catch {
            conflict = true;
            render();
          }
        });
      });
      root.append(
        h(
          "div",
          { id: "conflict-banner", role: "alert" },
          "This session changed elsewhere — reload before editing. ",
          reload,
        ),
      );
    }
  }

  function renderEnroll(v: SessionView): void {
    const roster = h("ul", { id: "roster" });
    for (const entry of v.roster) {
      roster.append(
        h(
          "li",
          { "data-expert-id": entry.expert_id },
          `${entry.name} `,
          h("code", {}, entry.expert_id),
        ),
      );
    }
    const name = h("input", {
      id: "enroll-name",
      "data-keep": "enroll-name",
      placeholder: "Expert name",
    });
    const button = h("button", { id: "enroll-btn" }, "Enroll expert");
    button.addEventListener("click", () => {
      const trimmed = name.value.trim();
      if (!trimmed) {
        setError("#enroll-error", "enter a name first");
        return;
      }
      name.value = "";
      run(() =>
        mutate(
          () => client.enroll(view!.session_id, trimmed, view!.version),
          "#enroll-error",
        ),
      );
    });
    root.append(
      h(
        "section",
        { id: "enroll-panel" },
        h("h2", {}, "Experts"),
        roster,
        name,
        button,
        h("span", { class: "inline-error", id: "enroll-error" }),
      ),
    );
  }

  function submitD(expertId: string, input: HTMLInputElement): void {
    const value = Number(input.value);
    const errorSelector = `.delphi-error[data-expert-id="${expertId}"]`;
    if (!Number.isFinite(value) || value <= 0) {
      setError(errorSelector, "D must be a positive number of days");
      return;
    }
    run(() =>
      mutate(
        () => client.submitDelphi(view!.session_id, expertId, value),
        errorSelector,
      ),
    );
  }

  function renderDelphi(v: SessionView): void {
    const delphi = v.delphi;
    const panel = h(
      "section",
      { id: "delphi-panel" },
      h("h2", {}, "Full-recovery horizon D"),
    );

    if (delphi) {
      const gauge = spreadGauge(delphi);
      const gaugeBox = h("div", {
        id: "spread-gauge",
        "data-within": gauge.withinTolerance ? "true" : "false",
      });
      if (gauge.stats) {
        gaugeBox.dataset["spread"] = String(gauge.stats.spread);
        gaugeBox.append(
          h(
            "p",
            {},
            `Round ${gauge.round} — spread ${gauge.stats.spread.toFixed(3)}` +
              ` (tolerance ${gauge.tolerance})`,
          ),
          h(
            "p",
            {},
            `min ${gauge.stats.min} · median ${gauge.stats.median}` +
              ` · max ${gauge.stats.max} days`,
          ),
        );
      } else {
        gaugeBox.append(h("p", {}, `Round ${gauge.round}`));
      }
      gaugeBox.append(h("p", { class: "prompt" }, gauge.prompt));
      panel.append(gaugeBox);

      if (delphi.status === "consensus") {
        panel.append(
          h(
            "div",
            { id: "consensus-banner" },
            `Consensus reached: D = ${delphi.consensus_D} days`,
          ),
        );
      } else {
        panel.append(
          h(
            "p",
            {},
            `${delphi.pending_count} of ${v.roster.length}` +
              " estimates in this round.",
          ),
        );
        for (const entry of v.roster) {
          const input = h("input", {
            class: "delphi-d",
            type: "number",
            "data-expert-id": entry.expert_id,
            "data-keep": `delphi:${entry.expert_id}`,
            placeholder: "days to full recovery",
          });
          const button = h(
            "button",
            { class: "delphi-submit", "data-expert-id": entry.expert_id },
            "Submit D",
          );
          button.addEventListener("click", () =>
            submitD(entry.expert_id, input),
          );
          panel.append(
            h(
              "div",
              { class: "delphi-row", "data-expert-id": entry.expert_id },
              h("label", {}, `${entry.name} `),
              input,
              button,
              h("span", {
                class: "inline-error delphi-error",
                "data-expert-id": entry.expert_id,
              }),
            ),
          );
        }
      }
    } else {
      panel.append(
        h(
          "p",
          {},
          `Each expert records their own horizon (${v.personal_d_count}` +
            ` of ${v.roster.length} recorded).`,
        ),
      );
      for (const entry of v.roster) {
        const input = h("input", {
          class: "delphi-d",
          type: "number",
          "data-expert-id": entry.expert_id,
          "data-keep": `delphi:${entry.expert_id}`,
          placeholder: "days to full recovery",
        });
        const button = h(
          "button",
          { class: "delphi-submit", "data-expert-id": entry.expert_id },
          "Record D",
        );
        button.addEventListener("click", () =>
          submitD(entry.expert_id, input),
        );
        panel.append(
          h(
            "div",
            { class: "delphi-row", "data-expert-id": entry.expert_id },
            h("label", {}, `${entry.name} `),
            input,
            button,
            h("span", {
              class: "inline-error delphi-error",
              "data-expert-id": entry.expert_id,
            }),
          ),
        );
      }
    }
    root.append(panel);
  }

  function rowInputs(expertId: string): HTMLInputElement[] {
    return Array.from(
      root.querySelectorAll<HTMLInputElement>(
        `input.est-cell[data-expert-id="${expertId}"]`,
      ),
    ).sort(
      (a, b) =>
        Number(a.dataset["levelIndex"]) - Number(b.dataset["levelIndex"]),
    );
  }

  function refreshRowFlags(expertId: string): void {
    const inputs = rowInputs(expertId);
    const values = inputs.map((input) => {
      if (input.value.trim() === "") return null;
      const num = Number(input.value);
      return Number.isFinite(num) ? num : null;
    });
    const flagged = nonMonotoneCells(values);
    inputs.forEach((input, idx) => {
      input.classList.toggle("non-monotone", flagged.has(idx));
    });
    setError(
      `.est-error[data-expert-id="${expertId}"]`,
      flagged.size ? "times must increase with recovery level" : "",
    );
  }

  function submitRow(expertId: string): void {
    const v = view!;
    const inputs = rowInputs(expertId);
    const items: { level: number; time_days: number }[] = [];
    for (const input of inputs) {
      if (input.value.trim() === "") continue; // skipped level
      const time = Number(input.value);
      const level = v.scheme.levels[Number(input.dataset["levelIndex"])]!;
      if (!Number.isFinite(time) || time <= 0) {
        setError(
          `.est-error[data-expert-id="${expertId}"]`,
          `time at ${levelLabel(level)} must be a positive number of days`,
        );
        return;
      }
      items.push({ level, time_days: time });
    }
    if (!items.length) {
      setError(
        `.est-error[data-expert-id="${expertId}"]`,
        "enter at least one time",
      );
      return;
    }
    run(() =>
      mutate(
        () =>
          client.submitEstimates(view!.session_id, expertId, items,
                                 view!.version),
        `.est-error[data-expert-id="${expertId}"]`,
      ),
    );
  }

  function renderEstimates(v: SessionView): void {
    const grid = completenessGrid(v);
    const head = h("tr", {}, h("th", {}, "Expert"));
    for (const level of v.scheme.levels) {
      head.append(h("th", { "data-level": String(level) }, levelLabel(level)));
    }
    head.append(h("th", {}));
    const body = h("tbody", {});
    for (const rowState of grid) {
      const filledCount = rowState.filled.filter(Boolean).length;
      const row = h(
        "tr",
        { "data-expert-id": rowState.expertId },
        h(
          "th",
          {},
          `${rowState.name} · ${filledCount}/${v.scheme.levels.length}`,
        ),
      );
      v.scheme.levels.forEach((level, idx) => {
        const known = v.estimates.find(
          (e) => e.expert_id === rowState.expertId && e.level === level,
        );
        const input = h("input", {
          class: "est-cell",
          "data-expert-id": rowState.expertId,
          "data-level-index": String(idx),
          "data-keep": `est:${rowState.expertId}:${idx}`,
          placeholder: "days",
          ...(known ? { value: String(known.time_days) } : {}),
        });
        input.addEventListener("input", () =>
          refreshRowFlags(rowState.expertId),
        );
        row.append(h("td", {}, input));
      });
      const button = h(
        "button",
        { class: "est-submit", "data-expert-id": rowState.expertId },
        "Submit row",
      );
      button.addEventListener("click", () => submitRow(rowState.expertId));
      row.append(
        h(
          "td",
          {},
          button,
          h("span", {
            class: "inline-error est-error",
            "data-expert-id": rowState.expertId,
          }),
        ),
      );
      body.append(row);
    }
    root.append(
      h(
        "section",
        { id: "estimates-panel" },
        h("h2", {}, "Time to reach each recovery level"),
        h(
          "div",
          { class: "scroll-x" },
          h("table", { id: "estimate-grid" }, h("thead", {}, head), body),
        ),
        h(
          "p",
          { class: "hint" },
          "Blank cells skip a level; times must increase left to right.",
        ),
      ),
    );
  }

  function renderCurve(v: SessionView): void {
    const stale = v.fitted === null && cachedFit !== null;
    const summary = v.fitted ? v.fitted.summary : cachedFit?.summary ?? null;
    const consensusD = v.delphi?.consensus_D ?? null;

    const fitButton = h(
      "button",
      { id: "fit-btn" },
      cachedFit ? "Refit curve" : "Fit curve",
    );
    fitButton.addEventListener("click", () => {
      run(() =>
        mutate(
          () =>
            client.fitSession(view!.session_id, {
              expected_version: view!.version,
            }),
          "#fit-error",
        ),
      );
    });

    const toggle = h("input", {
      type: "checkbox",
      id: "day-axis-toggle",
      ...(dayAxis ? { checked: "" } : {}),
      ...(consensusD === null ? { disabled: "" } : {}),
    });
    toggle.addEventListener("change", () => {
      dayAxis = toggle.checked;
      render();
    });

    const panel = h(
      "section",
      { id: "curve-panel" },
      h("h2", {}, "Fitted recovery curve"),
      fitButton,
      h(
        "label",
        { id: "day-axis-label", for: "day-axis-toggle" },
        toggle,
        " label times in days (× consensus D)",
      ),
      h("span", { class: "inline-error", id: "fit-error" }),
    );

    if (stale) {
      panel.append(
        h(
          "div",
          { id: "stale-badge" },
          "Inputs changed since this fit — refit to update the curve.",
        ),
      );
    }

    if (summary) {
      const chartBox = h("div", { id: "chart" });
      panel.append(chartBox);
      renderBandChart(
        chartBox,
        {
          grid: summary.grid,
          mean: summary.mean,
          lower95: summary.lower95,
          upper95: summary.upper95,
        },
        {
          dayScale: dayAxis && consensusD !== null ? consensusD : null,
          points: elicitedPoints(v),
          stale,
        },
      );
      const fittedVersion = v.fitted ? v.fitted.version : cachedFit!.version;
      const noise = v.fitted ? v.fitted.noise_source : cachedFit!.noiseSource;
      panel.append(
        h(
          "div",
          { id: "curve-meta" },
          `fitted at v${fittedVersion} · noise from ${noise}`,
        ),
      );
    } else {
      panel.append(
        h(
          "div",
          { id: "curve-empty" },
          "No curve yet — enroll experts, settle D, collect at least two" +
            " levels per expert, then fit.",
        ),
      );
    }
    root.append(panel);
  }

  function render(): void {
    const drafts = snapshotDrafts();
    root.textContent = "";
    if (!view) {
      renderCreate();
    } else {
      renderHeader(view);
      renderEnroll(view);
      renderDelphi(view);
      renderEstimates(view);
      renderCurve(view);
    }
    restoreDrafts(drafts);
    if (view) {
      for (const entry of view.roster) refreshRowFlags(entry.expert_id);
    }
  }

  render();

  const timer = setInterval(() => {
    if (view) {
      run(async () => {
        try {
          await pullView();
        } catch {
          /* transient poll failure: keep the current screen */
        }
      });
    }
  }, pollMs);

  return {
    idle: () => pending,
    refresh: async () => {
      await pullView();
      render();
    },
    stop: () => clearInterval(timer),
  };
}
