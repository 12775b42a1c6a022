import type { ScaleLattice } from "./scales";
import { availableMeasures, boundsSupported } from "./state";
import type { ChartSpec, ViewState } from "./state";
import type { MeasureReq, SchemaDoc } from "./types";

/** Vector-rendered control strip: plain DOM elements, no canvas. */

export interface ControlHandlers {
  onMeasure: (m: MeasureReq) => void;
  onAccuracy: (mode: string) => void;
  onShowError: (on: boolean) => void;
}

export interface ChartHandlers {
  onBins: (chartId: string, bins: number) => void;
  onStrategy: (chartId: string, strategy: ChartSpec["strategy"]) => void;
}

function option(value: string, label: string): HTMLOptionElement {
  const el = document.createElement("option");
  el.value = value;
  el.textContent = label;
  return el;
}

function labelled(text: string, child: HTMLElement): HTMLLabelElement {
  const l = document.createElement("label");
  l.textContent = text + " ";
  l.appendChild(child);
  return l;
}

export function measureLabel(m: MeasureReq): string {
  return m.dim ? `${m.kind}(${m.dim})` : m.kind;
}

export class Controls {
  readonly root: HTMLDivElement;
  readonly errorToggle: HTMLInputElement;
  private measureSelect: HTMLSelectElement;
  private banner: HTMLDivElement;
  private errorLabel: HTMLLabelElement;

  constructor(parent: HTMLElement, schema: SchemaDoc, handlers: ControlHandlers) {
    this.root = document.createElement("div");
    this.root.className = "controls";
    parent.appendChild(this.root);

    this.measureSelect = document.createElement("select");
    this.measureSelect.className = "measure";
    for (const m of availableMeasures(schema)) {
      this.measureSelect.appendChild(option(JSON.stringify(m), measureLabel(m)));
    }
    this.measureSelect.addEventListener("change", () => {
      handlers.onMeasure(JSON.parse(this.measureSelect.value) as MeasureReq);
    });
    this.root.appendChild(labelled("measure", this.measureSelect));

    const acc = document.createElement("select");
    acc.className = "accuracy";
    acc.appendChild(option("tree", "exact leaves (tree)"));
    acc.appendChild(option("lsh", "hashed candidates (lsh)"));
    acc.addEventListener("change", () => handlers.onAccuracy(acc.value));
    this.root.appendChild(labelled("accuracy", acc));

    this.errorToggle = document.createElement("input");
    this.errorToggle.type = "checkbox";
    this.errorToggle.className = "error-toggle";
    this.errorToggle.addEventListener("change", () => {
      handlers.onShowError(this.errorToggle.checked);
    });
    this.errorLabel = labelled("error bounds", this.errorToggle);
    this.root.appendChild(this.errorLabel);

    this.banner = document.createElement("div");
    this.banner.className = "banner";
    this.banner.style.display = "none";
    this.root.appendChild(this.banner);
  }

  /** Grey out controls that make no sense under the current measure. */
  sync(state: ViewState): void {
    this.measureSelect.value = JSON.stringify(state.measure);
    const supported = boundsSupported(state);
    this.errorToggle.disabled = !supported;
    if (!supported) {
      this.errorToggle.checked = false;
      this.errorLabel.title =
        "median answers carry no closed-form bound, so the toggle is off here";
      this.errorLabel.classList.add("disabled");
    } else {
      this.errorToggle.checked = state.showError;
      this.errorLabel.title = "";
      this.errorLabel.classList.remove("disabled");
    }
  }

  showBanner(text: string): void {
    this.banner.textContent = text;
    this.banner.style.display = "block";
  }

  clearBanner(): void {
    this.banner.style.display = "none";
  }
}

export interface ChartControls {
  root: HTMLDivElement;
  binsInput: HTMLInputElement;
  strategySelect: HTMLSelectElement;
}

/**
 * Binning controls for one chart. The bins slider is tick-marked at counts
 * that divide the dimension's cut lattice evenly, and the log strategy is
 * disabled outright when the domain includes zero or negative values.
 */
export function chartControls(
  parent: HTMLElement,
  chart: ChartSpec,
  lattice: ScaleLattice | undefined,
  handlers: ChartHandlers,
): ChartControls {
  const root = document.createElement("div");
  root.className = "chart-controls";
  parent.appendChild(root);

  const bins = document.createElement("input");
  bins.type = "range";
  bins.min = "2";
  bins.max = String(lattice ? Math.min(lattice.count, 100) : 50);
  bins.step = "1";
  bins.value = String(chart.bins);
  const list = document.createElement("datalist");
  list.id = `${chart.id}-ticks`;
  if (lattice) {
    for (let b = 2; b <= Math.min(lattice.count, 100); b++) {
      if (lattice.count % b === 0) {
        const tick = document.createElement("option");
        tick.value = String(b);
        list.appendChild(tick);
      }
    }
  }
  bins.setAttribute("list", list.id);
  bins.addEventListener("change", () => {
    handlers.onBins(chart.id, Number(bins.value));
  });
  root.appendChild(labelled("bins", bins));
  root.appendChild(list);

  const strategy = document.createElement("select");
  strategy.className = "strategy";
  strategy.appendChild(option("aligned", "lattice cuts"));
  strategy.appendChild(option("equi_width", "equal width"));
  strategy.appendChild(option("equi_data", "equal depth"));
  const log = option("log", "log spaced");
  if (!lattice || lattice.lo <= 0) {
    log.disabled = true;
    log.textContent = "log spaced (needs a positive domain)";
  }
  strategy.appendChild(log);
  strategy.value = chart.strategy;
  strategy.addEventListener("change", () => {
    handlers.onStrategy(chart.id, strategy.value as ChartSpec["strategy"]);
  });
  root.appendChild(labelled("binning", strategy));

  return { root, binsInput: bins, strategySelect: strategy };
}
