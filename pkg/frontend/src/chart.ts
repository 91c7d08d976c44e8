/** Hand-rolled SVG band chart.
 *
 * Recovery curves live on a fixed [0, 1] x [0, 1] domain, so the only
 * arithmetic here is the affine map from that domain to pixels (and the
 * display-only day-axis labels, tau times a server-provided D).  Series
 * values are plotted exactly as received; the raw series is also stamped
 * on the SVG as JSON so tests can verify nothing was recomputed.
 */

const SVG_NS = "http://www.w3.org/2000/svg";

export const CHART_WIDTH = 640;
export const CHART_HEIGHT = 360;
export const CHART_PAD = 42;

export interface ChartSeries {
  grid: number[];
  mean: number[];
  lower95: number[];
  upper95: number[];
}

export interface ChartOptions {
  /** Server-provided D (days); when set, x-axis labels show tau * D. */
  dayScale: number | null;
  points: { tau: number; level: number }[] | null;
  stale: boolean;
}

export function xPixel(tau: number): number {
  return CHART_PAD + tau * (CHART_WIDTH - 2 * CHART_PAD);
}

export function yPixel(level: number): number {
  return CHART_HEIGHT - CHART_PAD - level * (CHART_HEIGHT - 2 * CHART_PAD);
}

function el(name: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, name);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function fmt(v: number): string {
  return String(v);
}

export function renderBandChart(
  container: HTMLElement,
  series: ChartSeries,
  options: ChartOptions,
): SVGSVGElement {
  container.textContent = "";
  const svg = el("svg", {
    viewBox: `0 0 ${CHART_WIDTH} ${CHART_HEIGHT}`,
    width: "100%",
    role: "img",
    "aria-label": "recovery curve with 95% band",
  }) as SVGSVGElement;
  svg.dataset["series"] = JSON.stringify(series);
  svg.dataset["stale"] = options.stale ? "true" : "false";

  // axes
  const axis = el("g", { class: "axis" });
  axis.appendChild(el("line", {
    x1: fmt(xPixel(0)), y1: fmt(yPixel(0)),
    x2: fmt(xPixel(1)), y2: fmt(yPixel(0)),
    stroke: "currentColor",
  }));
  axis.appendChild(el("line", {
    x1: fmt(xPixel(0)), y1: fmt(yPixel(0)),
    x2: fmt(xPixel(0)), y2: fmt(yPixel(1)),
    stroke: "currentColor",
  }));
  for (const tick of [0, 0.25, 0.5, 0.75, 1]) {
    const label = el("text", {
      x: fmt(xPixel(tick)),
      y: fmt(yPixel(0) + 24),
      "text-anchor": "middle",
      class: "tick tick-x",
    });
    label.textContent =
      options.dayScale === null
        ? tick.toFixed(2)
        : `${(tick * options.dayScale).toFixed(0)}d`;
    axis.appendChild(label);
    const ylabel = el("text", {
      x: fmt(xPixel(0) - 8),
      y: fmt(yPixel(tick) + 4),
      "text-anchor": "end",
      class: "tick tick-y",
    });
    ylabel.textContent = `${(tick * 100).toFixed(0)}%`;
    axis.appendChild(ylabel);
  }
  svg.appendChild(axis);

  // 95% band: upper edge left-to-right, then lower edge back
  const bandPoints = [
    ...series.grid.map((t, i) => `${xPixel(t)},${yPixel(series.upper95[i]!)}`),
    ...series.grid
      .map((t, i) => `${xPixel(t)},${yPixel(series.lower95[i]!)}`)
      .reverse(),
  ].join(" ");
  svg.appendChild(el("polygon", {
    points: bandPoints,
    class: "band",
    fill: "currentColor",
    "fill-opacity": "0.18",
    stroke: "none",
  }));

  // mean curve
  const meanPoints = series.grid
    .map((t, i) => `${xPixel(t)},${yPixel(series.mean[i]!)}`)
    .join(" ");
  svg.appendChild(el("polyline", {
    points: meanPoints,
    class: "mean",
    fill: "none",
    stroke: "currentColor",
    "stroke-width": "2",
  }));

  // elicited points (already normalized with the server-provided D)
  if (options.points) {
    const dots = el("g", { class: "elicited" });
    for (const p of options.points) {
      dots.appendChild(el("circle", {
        cx: fmt(xPixel(p.tau)),
        cy: fmt(yPixel(p.level)),
        r: "3.5",
        fill: "none",
        stroke: "currentColor",
        "stroke-width": "1.5",
      }));
    }
    svg.appendChild(dots);
  }

  container.appendChild(svg);
  return svg;
}
