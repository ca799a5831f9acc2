// Dashboard wiring: one debounced query round per form edit, three panels
// (per-option retention with credible intervals, optimal-schedule triangle,
// retention-vs-window curve), stale responses discarded by sequence number.

import {
  ApiError,
  CurveResponse,
  OptimizeResponse,
  PredictResponse,
  RetentionClient,
} from "./api.js";
import { WhatIfForm } from "./form.js";
import { placePmf, pmfTotal, toSvg, uncertaintyScore } from "./triangle.js";

export const DEBOUNCE_MS = 250;
export const CURVE_GRID = [1, 2, 4, 8, 90 / 7].sort((a, b) => a - b);
const TRIANGLE_SIZE = 220;
const NO_MODEL_MESSAGE = "no model for this combination";

export interface PanelPayloads {
  predict: Map<number, string>;
  optimize: string;
  curve: string;
}

export class Dashboard {
  readonly form: WhatIfForm;
  readonly seed: number;
  private seq = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private readonly predictPanel: HTMLElement;
  private readonly trianglePanel: HTMLElement;
  private readonly curvePanel: HTMLElement;
  private readonly statusLine: HTMLElement;
  /** raw JSON of the last rendered round, keyed for inspection/tests */
  lastPayloads: PanelPayloads | null = null;

  constructor(
    private readonly doc: Document,
    root: HTMLElement,
    private readonly client: RetentionClient,
    covariateNames: string[],
    private readonly scheduleOptions: number[],
    sessionSeed?: number,
  ) {
    // one seed per browsing session keeps Monte Carlo estimates stable while
    // the clinician toggles fields, so options never flicker past each other
    this.seed = sessionSeed ?? Math.floor(Math.random() * 2 ** 31);
    this.form = new WhatIfForm(doc, covariateNames, scheduleOptions, () =>
      this.scheduleQuery(),
    );
    this.predictPanel = doc.createElement("section");
    this.trianglePanel = doc.createElement("section");
    this.curvePanel = doc.createElement("section");
    this.statusLine = doc.createElement("p");
    this.statusLine.className = "status";
    root.append(
      this.form.element,
      this.statusLine,
      this.predictPanel,
      this.trianglePanel,
      this.curvePanel,
    );
  }

  scheduleQuery(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.query();
    }, DEBOUNCE_MS);
  }

  async query(): Promise<void> {
    const seq = ++this.seq;
    const { covariates, pattern, schedule, delta } = this.form.state();
    const base = { covariates, pattern, seed: this.seed };
    try {
      const [predictions, optimize, curve] = await Promise.all([
        Promise.all(
          this.scheduleOptions.map((s) =>
            this.client.predict({ ...base, schedule: s, delta }),
          ),
        ),
        this.client.optimize({ ...base, delta }),
        this.client.curve({ ...base, schedule, delta_grid: CURVE_GRID }),
      ]);
      if (seq !== this.seq) return; // a newer edit superseded this round
      this.lastPayloads = {
        predict: new Map(
          this.scheduleOptions.map((s, i) => [s, predictions[i].raw]),
        ),
        optimize: optimize.raw,
        curve: curve.raw,
      };
      this.statusLine.textContent = "";
      this.renderPredict(predictions.map((p) => p.body));
      this.renderTriangle(optimize.body);
      this.renderCurve(curve.body, delta, schedule);
    } catch (err) {
      if (seq !== this.seq) return;
      if (err instanceof ApiError && err.isUnknownStratum) {
        this.statusLine.textContent = NO_MODEL_MESSAGE;
      } else {
        this.statusLine.textContent = `service error: ${String(err)}`;
      }
    }
  }

  private renderPredict(results: PredictResponse[]): void {
    this.predictPanel.replaceChildren();
    const heading = this.doc.createElement("h2");
    heading.textContent = "retention by schedule";
    this.predictPanel.append(heading);
    for (const r of results) {
      const row = this.doc.createElement("div");
      row.className = "ci-bar-row";
      row.dataset.schedule = String(r.schedule);
      const label = this.doc.createElement("span");
      label.textContent = `${r.schedule} wk: ${r.psi_mean.toFixed(3)} ` +
        `[${r.psi_ci[0].toFixed(3)}, ${r.psi_ci[1].toFixed(3)}]`;
      const bar = this.doc.createElement("div");
      bar.className = "ci-bar";
      bar.style.marginLeft = `${(r.psi_ci[0] * 100).toFixed(1)}%`;
      bar.style.width = `${((r.psi_ci[1] - r.psi_ci[0]) * 100).toFixed(1)}%`;
      row.append(label, bar);
      this.predictPanel.append(row);
    }
  }

  private renderTriangle(result: OptimizeResponse): void {
    this.trianglePanel.replaceChildren();
    const heading = this.doc.createElement("h2");
    heading.textContent = "recommended schedule";
    this.trianglePanel.append(heading);

    const placement = placePmf(result.pmf, this.scheduleOptions);
    const svgNs = "http://www.w3.org/2000/svg";
    const svg = this.doc.createElementNS(svgNs, "svg");
    svg.setAttribute("viewBox", `0 0 ${TRIANGLE_SIZE} ${TRIANGLE_SIZE}`);
    svg.setAttribute("width", String(TRIANGLE_SIZE));
    svg.setAttribute("height", String(TRIANGLE_SIZE));

    const outline = this.doc.createElementNS(svgNs, "polygon");
    outline.setAttribute(
      "points",
      `0,${TRIANGLE_SIZE} ${TRIANGLE_SIZE},${TRIANGLE_SIZE} 0,0`,
    );
    outline.setAttribute("class", "simplex-outline");
    svg.append(outline);

    const center = toSvg([1 / 3, 1 / 3], TRIANGLE_SIZE);
    const centerDot = this.doc.createElementNS(svgNs, "circle");
    centerDot.setAttribute("cx", String(center.x));
    centerDot.setAttribute("cy", String(center.y));
    centerDot.setAttribute("r", "3");
    centerDot.setAttribute("class", "simplex-center");
    svg.append(centerDot);

    const pixel = toSvg(placement.point, TRIANGLE_SIZE);
    const dot = this.doc.createElementNS(svgNs, "circle");
    dot.setAttribute("cx", String(pixel.x));
    dot.setAttribute("cy", String(pixel.y));
    dot.setAttribute("r", "6");
    dot.setAttribute("class", "pmf-point");
    dot.dataset.p1 = String(placement.point[0]);
    dot.dataset.p2 = String(placement.point[1]);
    svg.append(dot);
    this.trianglePanel.append(svg);

    const list = this.doc.createElement("ul");
    list.className = "pmf-list";
    for (let i = 0; i < placement.options.length; i++) {
      const item = this.doc.createElement("li");
      item.textContent =
        `P(best = ${placement.options[i]} wk) = ${placement.masses[i].toFixed(3)}`;
      list.append(item);
    }
    const total = this.doc.createElement("li");
    total.className = "pmf-total";
    total.textContent = `total = ${pmfTotal(result.pmf)}`;
    list.append(total);
    this.trianglePanel.append(list);

    const summary = this.doc.createElement("p");
    summary.textContent =
      `mode: ${result.mode} wk; uncertainty ` +
      `${uncertaintyScore(placement.masses).toFixed(2)} (1 = no preference)`;
    this.trianglePanel.append(summary);
  }

  private renderCurve(
    result: CurveResponse,
    currentDelta: number,
    schedule: number,
  ): void {
    this.curvePanel.replaceChildren();
    const heading = this.doc.createElement("h2");
    heading.textContent = `retention vs window (schedule ${schedule} wk)`;
    this.curvePanel.append(heading);

    const width = 320;
    const height = 160;
    const maxDelta = Math.max(...result.curve.map((p) => p.delta));
    const px = (d: number) => (d / maxDelta) * width;
    const py = (v: number) => height - v * height;

    const svgNs = "http://www.w3.org/2000/svg";
    const svg = this.doc.createElementNS(svgNs, "svg");
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
    svg.setAttribute("width", String(width));
    svg.setAttribute("height", String(height));

    const band = this.doc.createElementNS(svgNs, "polygon");
    const upper = result.curve.map((p) => `${px(p.delta)},${py(p.hi)}`);
    const lower = [...result.curve]
      .reverse()
      .map((p) => `${px(p.delta)},${py(p.lo)}`);
    band.setAttribute("points", [...upper, ...lower].join(" "));
    band.setAttribute("class", "curve-band");
    svg.append(band);

    const line = this.doc.createElementNS(svgNs, "polyline");
    line.setAttribute(
      "points",
      result.curve.map((p) => `${px(p.delta)},${py(p.mean)}`).join(" "),
    );
    line.setAttribute("class", "curve-mean");
    line.setAttribute("fill", "none");
    svg.append(line);

    const marker = this.doc.createElementNS(svgNs, "line");
    marker.setAttribute("x1", String(px(currentDelta)));
    marker.setAttribute("x2", String(px(currentDelta)));
    marker.setAttribute("y1", "0");
    marker.setAttribute("y2", String(height));
    marker.setAttribute("class", "delta-marker");
    marker.dataset.delta = String(currentDelta);
    svg.append(marker);

    this.curvePanel.append(svg);
  }
}

export async function mount(
  doc: Document,
  root: HTMLElement,
  client: RetentionClient,
  sessionSeed?: number,
): Promise<Dashboard> {
  const health = await client.health();
  const dashboard = new Dashboard(
    doc,
    root,
    client,
    health.covariates,
    health.schedule_options,
    sessionSeed,
  );
  await dashboard.query();
  return dashboard;
}
