/** Latest-wins render loop: stale responses never paint. */

import type { ApiClient } from './api.js'
import type { ViewState } from './types.js'

export class LatestWins {
  private issued = 0
  private painted = 0

  /** Tag a new request. */
  begin(): number {
    return ++this.issued
  }

  /** True when this response is newer than anything painted so far. */
  commit(token: number): boolean {
    if (token <= this.painted) return false
    this.painted = token
    return true
  }
}

export class ViewRenderer {
  private sequence = new LatestWins()

  constructor(
    private api: ApiClient,
    private paint: (image: Blob, view: ViewState) => void,
    private onError: (error: unknown) => void = () => {},
  ) {}

  /** Request a repaint; resolves true when this response painted. */
  async render(view: ViewState): Promise<boolean> {
    const token = this.sequence.begin()
    try {
      const image = await this.api.project(view)
      if (!this.sequence.commit(token)) return false
      this.paint(image, view)
      return true
    } catch (error) {
      // keep the last good render on screen
      this.onError(error)
      return false
    }
  }
}
