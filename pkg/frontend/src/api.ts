/** Typed client for the annotation service. All angular math lives there. */

import type {
  AnnotationObject,
  BoxJson,
  FrameAnnotationsJson,
  FrameInfo,
  SpherePoint,
  ViewState,
} from './types.js'

export class ConflictError extends Error {
  constructor(public current: number) {
    super(`stale version; server is at ${current}`)
  }
}

function viewBody(view: ViewState) {
  return {
    frame: view.frame,
    lat: view.lat,
    lon: view.lon,
    fov_h: view.fovH,
    fov_w: view.fovW,
    d: view.d,
    out_w: view.canvasW,
    out_h: view.canvasH,
  }
}

async function checked(response: Response): Promise<Response> {
  if (!response.ok) {
    const text = await response.text().catch(() => '')
    throw new Error(`${response.status}: ${text.slice(0, 200)}`)
  }
  return response
}

export class ApiClient {
  constructor(private base = '') {}

  private async post(path: string, body: unknown): Promise<Response> {
    return fetch(`${this.base}${path}`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    })
  }

  async frames(): Promise<FrameInfo[]> {
    const response = await checked(await fetch(`${this.base}/frames`))
    return response.json()
  }

  /** Render the view; resolves to a PNG blob. */
  async project(view: ViewState): Promise<Blob> {
    const response = await checked(await this.post('/project', viewBody(view)))
    return response.blob()
  }

  /** Map a canvas pixel of the view to sphere angles (degrees). */
  async unproject(view: ViewState, px: number, py: number): Promise<SpherePoint> {
    const response = await checked(
      await this.post('/unproject', { ...viewBody(view), px, py }),
    )
    return response.json()
  }

  async getAnnotations(frame: string): Promise<FrameAnnotationsJson> {
    const response = await checked(
      await fetch(`${this.base}/frames/${encodeURIComponent(frame)}/annotations`),
    )
    return response.json()
  }

  async putAnnotations(
    frame: string,
    version: number,
    objects: AnnotationObject[],
  ): Promise<number> {
    const response = await fetch(
      `${this.base}/frames/${encodeURIComponent(frame)}/annotations`,
      {
        method: 'PUT',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ version, objects }),
      },
    )
    if (response.status === 409) {
      const body = await response.json().catch(() => ({ detail: {} }))
      throw new ConflictError(body.detail?.current ?? -1)
    }
    await checked(response)
    const body = await response.json()
    return body.version
  }

  async convertBfovToBox(
    bfov: { label: string; lat: number; lon: number; dlat: number; dlon: number },
    width: number,
    height: number,
  ): Promise<BoxJson> {
    const response = await checked(
      await this.post('/convert/bfov-to-box', { ...bfov, width, height }),
    )
    return response.json()
  }
}
