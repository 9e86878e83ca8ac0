/** Draft-rectangle to BFOV conversion and versioned saving.
 *
 * The BFOV center comes from unprojecting the rectangle center; the
 * extents come from unprojecting the four edge midpoints and differencing
 * the angles, so the stored annotation is exactly what the service's
 * geometry says the rectangle covers.
 */

import { ApiClient, ConflictError } from './api.js'
import type { AnnotationObject, BfovJson, CanvasRect, ViewState } from './types.js'

function round6(value: number): number {
  return Math.round(value * 1e6) / 1e6
}

/** Shortest signed longitude difference b - a in degrees. */
export function lonSpan(a: number, b: number): number {
  let delta = (b - a) % 360
  if (delta < -180) delta += 360
  if (delta >= 180) delta -= 360
  return delta
}

export async function draftToBfov(
  api: ApiClient,
  view: ViewState,
  rect: CanvasRect,
): Promise<BfovJson> {
  const cx = rect.x + rect.w / 2
  const cy = rect.y + rect.h / 2
  const [center, left, right, top, bottom] = await Promise.all([
    api.unproject(view, cx, cy),
    api.unproject(view, rect.x, cy),
    api.unproject(view, rect.x + rect.w, cy),
    api.unproject(view, cx, rect.y),
    api.unproject(view, cx, rect.y + rect.h),
  ])
  return {
    lat: round6(center.lat),
    lon: round6(center.lon),
    dlat: round6(Math.abs(top.lat - bottom.lat)),
    dlon: round6(Math.abs(lonSpan(left.lon, right.lon))),
  }
}

export function bfovObject(label: string, bfov: BfovJson): AnnotationObject {
  return { label, kind: 'bfov', source: 'bfov-derived', bfov }
}

export interface SaveResult {
  version: number
  objects: AnnotationObject[]
  retried: boolean
}

/**
 * Append an annotation and save; on a stale-version conflict, reload the
 * server state, re-apply the draft, and save again.
 */
export async function saveWithRetry(
  api: ApiClient,
  frame: string,
  knownVersion: number,
  knownObjects: AnnotationObject[],
  draft: AnnotationObject,
  maxRetries = 3,
): Promise<SaveResult> {
  let version = knownVersion
  let objects = [...knownObjects, draft]
  let retried = false
  for (let attempt = 0; ; attempt++) {
    try {
      const next = await api.putAnnotations(frame, version, objects)
      return { version: next, objects, retried }
    } catch (error) {
      if (!(error instanceof ConflictError) || attempt >= maxRetries) throw error
      retried = true
      const fresh = await api.getAnnotations(frame)
      version = fresh.version
      objects = [...fresh.objects, draft]
    }
  }
}
