/** Monotone ticket counter behind the last-write-wins display rule.
 *
 * Each enhance request takes a ticket; a response may only be shown if no
 * response holding an equal or newer ticket has been shown already.  Under
 * any interleaving of completions the pane therefore ends up showing the
 * highest-ticket response that arrived, never an older one.
 */
export class Sequencer {
  private issued = 0;
  private barrier = 0;

  issue(): number {
    return ++this.issued;
  }

  /** One shot per ticket: true only while no equal-or-newer ticket has
   * been applied and the ticket predates no invalidation. */
  tryApply(id: number): boolean {
    if (id <= this.barrier) return false;
    this.barrier = id;
    return true;
  }

  /** Mark every outstanding ticket stale; used when the token changes
   * and pending responses belong to an image no longer on screen. */
  invalidateAll(): void {
    this.barrier = this.issued;
  }
}
