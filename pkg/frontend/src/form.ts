// What-if form: one numeric input plus a "not measured" toggle per covariate,
// a schedule selector, and a delay-tolerance (delta) selector with the three
// programmatic retention outcomes as presets.

export const DELTA_PRESETS: { label: string; weeks: number }[] = [
  { label: "defaulter (1 wk)", weeks: 1 },
  { label: "IIT (4 wk)", weeks: 4 },
  { label: "LTFU (90 d)", weeks: 90 / 7 },
];

export interface FormState {
  covariates: Record<string, number>;
  pattern: boolean[];
  schedule: number;
  delta: number;
}

export class WhatIfForm {
  readonly element: HTMLFormElement;
  private readonly valueInputs = new Map<string, HTMLInputElement>();
  private readonly measuredToggles = new Map<string, HTMLInputElement>();
  private readonly scheduleSelect: HTMLSelectElement;
  private readonly deltaSelect: HTMLSelectElement;

  constructor(
    doc: Document,
    private readonly covariateNames: string[],
    scheduleOptions: number[],
    private readonly onEdit: () => void,
  ) {
    this.element = doc.createElement("form");
    this.element.className = "what-if-form";
    this.element.addEventListener("submit", (e) => e.preventDefault());

    for (const name of covariateNames) {
      const row = doc.createElement("label");
      row.className = "covariate-row";
      row.append(`${name} `);

      const value = doc.createElement("input");
      value.type = "number";
      value.step = "any";
      value.value = "0";
      value.name = `value-${name}`;
      value.addEventListener("input", () => this.onEdit());
      this.valueInputs.set(name, value);
      row.append(value);

      const toggle = doc.createElement("input");
      toggle.type = "checkbox";
      toggle.name = `not-measured-${name}`;
      toggle.addEventListener("change", () => {
        value.disabled = toggle.checked;
        this.onEdit();
      });
      this.measuredToggles.set(name, toggle);
      const toggleLabel = doc.createElement("span");
      toggleLabel.append(toggle, " not measured");
      row.append(toggleLabel);
      this.element.append(row);
    }

    this.scheduleSelect = doc.createElement("select");
    this.scheduleSelect.name = "schedule";
    for (const s of scheduleOptions) {
      const opt = doc.createElement("option");
      opt.value = String(s);
      opt.textContent = `${s} weeks`;
      this.scheduleSelect.append(opt);
    }
    this.scheduleSelect.addEventListener("change", () => this.onEdit());
    const scheduleRow = doc.createElement("label");
    scheduleRow.append("scheduled return ", this.scheduleSelect);
    this.element.append(scheduleRow);

    this.deltaSelect = doc.createElement("select");
    this.deltaSelect.name = "delta";
    for (const preset of DELTA_PRESETS) {
      const opt = doc.createElement("option");
      opt.value = String(preset.weeks);
      opt.textContent = preset.label;
      this.deltaSelect.append(opt);
    }
    this.deltaSelect.value = String(90 / 7);
    this.deltaSelect.addEventListener("change", () => this.onEdit());
    const deltaRow = doc.createElement("label");
    deltaRow.append("retention window ", this.deltaSelect);
    this.element.append(deltaRow);
  }

  state(): FormState {
    const covariates: Record<string, number> = {};
    const pattern: boolean[] = [];
    for (const name of this.covariateNames) {
      const measured = !this.measuredToggles.get(name)!.checked;
      pattern.push(measured);
      if (measured) {
        covariates[name] = Number(this.valueInputs.get(name)!.value) || 0;
      }
    }
    return {
      covariates,
      pattern,
      schedule: Number(this.scheduleSelect.value),
      delta: Number(this.deltaSelect.value),
    };
  }
}
