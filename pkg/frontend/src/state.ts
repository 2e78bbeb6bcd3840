/** Console state: reconstructible from (model info, anchor, slider values). */

import type { ModelInfo } from "./api.js";

export type Anchor =
  | { kind: "code"; zSeed: number }
  | { kind: "image"; image: string };

export type HistoryStep = { code: number[]; imageDigest: string };

export type ConsoleState = {
  info: ModelInfo | null;
  anchor: Anchor;
  sliders: number[];
  lastImage: string | null;
  history: HistoryStep[];
};

export function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v));
}

export function initialState(): ConsoleState {
  return {
    info: null,
    anchor: { kind: "code", zSeed: 0 },
    sliders: [],
    lastImage: null,
    history: [],
  };
}

/** Factors the current model edits: all of them, or the fine subset. */
export function editableFactors(info: ModelInfo): { index: number; name: string }[] {
  const names = info.factor_spec.factors.map((f) => f.name);
  if (info.fine_cutoff !== null && info.fine_factors) {
    return info.fine_factors.map((i) => ({ index: i, name: names[i] }));
  }
  return names.map((name, index) => ({ index, name }));
}

export function isFineModel(info: ModelInfo): boolean {
  return info.fine_cutoff !== null;
}

/** Cheap digest so history entries can be compared without storing images twice. */
export function imageDigest(b64: string): string {
  let h = 0x811c9dc5;
  for (let i = 0; i < b64.length; i += 1) {
    h ^= b64.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return (h >>> 0).toString(16).padStart(8, "0");
}

export function pushHistory(
  state: ConsoleState,
  code: number[],
  image: string,
  limit = 50,
): void {
  state.history.push({ code: [...code], imageDigest: imageDigest(image) });
  if (state.history.length > limit) state.history.shift();
}
