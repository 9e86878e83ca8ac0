/** Re-project stored annotations and detections into the current view.
 *
 * The service only answers view-pixel -> angles (/unproject), so the
 * inverse direction is solved numerically: alternating per-axis bisection
 * over /unproject calls.  The UI itself never evaluates the projection;
 * it only compares angles and halves pixel intervals.
 */

import type { ApiClient } from './api.js'
import type {
  AnnotationObject,
  BoxJson,
  CanvasRect,
  SpherePoint,
  ViewState,
} from './types.js'
import { lonSpan } from './annotate.js'

const BISECTION_STEPS = 14
const ROUNDS = 2

export async function solveViewPixel(
  api: ApiClient,
  view: ViewState,
  target: SpherePoint,
): Promise<{ x: number; y: number } | null> {
  let x = view.canvasW / 2
  let y = view.canvasH / 2
  for (let round = 0; round < ROUNDS; round++) {
    const solvedX = await bisect(
      0,
      view.canvasW,
      async (px) => lonSpan(target.lon, (await api.unproject(view, px, y)).lon),
    )
    if (solvedX === null) return null
    x = solvedX
    // latitude decreases downward, so flip the comparison
    const solvedY = await bisect(
      0,
      view.canvasH,
      async (py) => target.lat - (await api.unproject(view, x, py)).lat,
    )
    if (solvedY === null) return null
    y = solvedY
  }
  return { x, y }
}

/** Bisection for an increasing function; null when the root is outside. */
async function bisect(
  lo: number,
  hi: number,
  f: (t: number) => Promise<number>,
): Promise<number | null> {
  let flo = await f(lo)
  let fhi = await f(hi)
  if (flo > 0 || fhi < 0) return null
  for (let step = 0; step < BISECTION_STEPS; step++) {
    const mid = (lo + hi) / 2
    const fmid = await f(mid)
    if (fmid < 0) {
      lo = mid
      flo = fmid
    } else {
      hi = mid
      fhi = fmid
    }
  }
  return (lo + hi) / 2
}

/** ERA pixel -> angles is a plain linear scaling of the panorama raster. */
export function eraPixelToAngles(
  px: number,
  py: number,
  width: number,
  height: number,
): SpherePoint {
  return {
    lon: (px / width) * 360 - 180,
    lat: 90 - (py / height) * 180,
  }
}

/** Representative points of a panorama box: center plus edge midpoints. */
export function boxProbePoints(
  box: BoxJson,
  width: number,
  height: number,
): SpherePoint[] {
  const left = box.cx - box.w / 2
  const right = box.cx + box.w / 2 // may exceed width when wrapping
  const points = [
    [box.cx, box.cy],
    [left, box.cy],
    [right, box.cy],
    [box.cx, box.cy - box.h / 2],
    [box.cx, box.cy + box.h / 2],
  ]
  return points.map(([x, y]) =>
    eraPixelToAngles(((x % width) + width) % width, y, width, height),
  )
}

/** Hull of the probe points in view pixels; null when none are solvable. */
async function probesToRect(
  api: ApiClient,
  view: ViewState,
  probes: SpherePoint[],
): Promise<CanvasRect | null> {
  const solved = []
  for (const probe of probes) {
    const hit = await solveViewPixel(api, view, probe)
    if (hit) solved.push(hit)
  }
  if (solved.length < 3) return null
  const xs = solved.map((p) => p.x)
  const ys = solved.map((p) => p.y)
  const x = Math.min(...xs)
  const y = Math.min(...ys)
  return { x, y, w: Math.max(...xs) - x, h: Math.max(...ys) - y }
}

export async function bfovToViewRect(
  api: ApiClient,
  view: ViewState,
  bfov: { lat: number; lon: number; dlat: number; dlon: number },
): Promise<CanvasRect | null> {
  const probes: SpherePoint[] = [
    { lat: bfov.lat, lon: bfov.lon },
    { lat: bfov.lat, lon: bfov.lon - bfov.dlon / 2 },
    { lat: bfov.lat, lon: bfov.lon + bfov.dlon / 2 },
    { lat: bfov.lat - bfov.dlat / 2, lon: bfov.lon },
    { lat: bfov.lat + bfov.dlat / 2, lon: bfov.lon },
  ]
  return probesToRect(api, view, probes)
}

export async function boxToViewRect(
  api: ApiClient,
  view: ViewState,
  box: BoxJson,
  frameWidth: number,
  frameHeight: number,
): Promise<CanvasRect | null> {
  return probesToRect(api, view, boxProbePoints(box, frameWidth, frameHeight))
}

export async function annotationToViewRect(
  api: ApiClient,
  view: ViewState,
  entry: AnnotationObject,
  frameWidth: number,
  frameHeight: number,
): Promise<CanvasRect | null> {
  if (entry.kind === 'bfov' && entry.bfov) {
    return bfovToViewRect(api, view, entry.bfov)
  }
  if (entry.kind === 'box' && entry.box) {
    return boxToViewRect(api, view, entry.box, frameWidth, frameHeight)
  }
  return null
}
