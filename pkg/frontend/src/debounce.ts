/** Debouncing and latest-wins response handling for slider-driven requests. */

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = undefined;
      fn(...args);
    }, ms);
  };
}

/**
 * Serializes overlapping async responses: only the callback of the most
 * recently dispatched request ever fires, so a slow early response can never
 * overwrite a fast later one.
 */
export class LatestWins<T> {
  private lastId = 0;

  get inFlight(): boolean {
    return this.pending > 0;
  }

  private pending = 0;

  async dispatch(
    fired: Promise<T>,
    onValue: (value: T) => void,
    onError?: (err: unknown) => void,
  ): Promise<void> {
    this.lastId += 1;
    const thisId = this.lastId;
    this.pending += 1;
    try {
      const value = await fired;
      if (thisId === this.lastId) onValue(value);
    } catch (err) {
      if (thisId === this.lastId && onError) onError(err);
    } finally {
      this.pending -= 1;
    }
  }

  invalidate(): void {
    this.lastId += 1;
  }
}
