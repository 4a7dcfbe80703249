/** Trailing-edge debounce that coalesces knob movement into one request.
 *
 * The wrapped function fires once the caller has been quiet for `waitMs`,
 * with the most recent arguments. Because each fire happens at least
 * `waitMs` after the call that scheduled it, consecutive fires are at least
 * `waitMs` apart, which is what bounds the redecode request rate.
 */

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  /** Drop any pending call. */
  cancel(): void;
  /** Run a pending call now instead of waiting out the quiet period. */
  flush(): void;
  pending(): boolean;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let lastArgs: A | null = null;

  const invoke = (): void => {
    timer = null;
    if (lastArgs === null) return;
    const args = lastArgs;
    lastArgs = null;
    fn(...args);
  };

  const wrapped = (...args: A): void => {
    lastArgs = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(invoke, waitMs);
  };

  wrapped.cancel = (): void => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    lastArgs = null;
  };

  wrapped.flush = (): void => {
    if (timer === null) return;
    clearTimeout(timer);
    invoke();
  };

  wrapped.pending = (): boolean => timer !== null;

  return wrapped;
}
