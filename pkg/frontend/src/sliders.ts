/** Per-factor slider rows, labels derived from the factor spec. */

export type SliderChange = (factorPosition: number, value: number) => void;

export function sliderRow(
  label: string,
  value: number,
  onInput: (value: number) => void,
): HTMLLabelElement {
  const wrap = document.createElement("label");
  wrap.className = "fg-slider-row";

  const title = document.createElement("span");
  title.className = "fg-slider-name";
  title.textContent = label;

  const readout = document.createElement("span");
  readout.className = "fg-slider-value";
  readout.textContent = value.toFixed(2);

  const input = document.createElement("input");
  input.type = "range";
  input.min = "0";
  input.max = "1";
  input.step = "0.01";
  input.value = String(value);

  input.addEventListener("input", () => {
    const next = Number(input.value);
    readout.textContent = next.toFixed(2);
    onInput(next);
  });

  wrap.append(title, input, readout);
  return wrap;
}

export function buildSliders(
  container: HTMLElement,
  labels: string[],
  values: number[],
  onChange: SliderChange,
): void {
  container.replaceChildren();
  labels.forEach((label, i) => {
    container.append(sliderRow(label, values[i], (v) => onChange(i, v)));
  });
}
