/**
 * Per-scope supersession tokens.
 *
 * Every async refresh takes a token for its scope before the request
 * goes out and checks it when the response lands; any newer request in
 * the same scope invalidates it. With the single-threaded event loop
 * this is all the ordering the viewer needs: late responses for stale
 * inputs are dropped on arrival, never painted.
 */
export class Supersession {
  private seq = new Map<string, number>();

  begin(scope: string): number {
    const next = (this.seq.get(scope) ?? 0) + 1;
    this.seq.set(scope, next);
    return next;
  }

  current(scope: string, token: number): boolean {
    return this.seq.get(scope) === token;
  }

  /** Invalidate without starting anything, e.g. when a new subject
      load must silence in-flight slider queries. */
  cancel(scope: string): void {
    this.begin(scope);
  }
}
