// One in-flight curve request per view: every submission takes a sequence
// number, and only the response matching the latest sequence is applied.

export class RequestSequencer {
  private seq = 0;

  next(): number {
    this.seq += 1;
    return this.seq;
  }

  isCurrent(token: number): boolean {
    return token === this.seq;
  }
}

/** Wraps an async fetch so stale resolutions return null instead of data. */
export async function latestOnly<T>(
  sequencer: RequestSequencer,
  work: () => Promise<T>,
): Promise<T | null> {
  const token = sequencer.next();
  const result = await work();
  return sequencer.isCurrent(token) ? result : null;
}
