/** View-state transitions: pan, zoom, presets.
 *
 * Only linear screen scaling happens here; anything involving the
 * projection itself goes through the service.
 */

import type { CanvasRect, ViewState } from './types.js'

export const FOV_PRESETS = [90, 120, 150]

const MIN_FOV = 1
const MAX_FOV_STEREO = 180
const MAX_FOV_PERSPECTIVE = 179

export function wrapLon(deg: number): number {
  let lon = ((deg + 180) % 360 + 360) % 360 - 180
  return lon
}

export function clampLat(deg: number): number {
  return Math.max(-90, Math.min(90, deg))
}

export function maxFov(view: ViewState): number {
  return view.d === 0 ? MAX_FOV_PERSPECTIVE : MAX_FOV_STEREO
}

/** Drag by (dx, dy) canvas pixels: content follows the pointer. */
export function panView(view: ViewState, dxPx: number, dyPx: number): ViewState {
  const lon = wrapLon(view.lon - (dxPx * view.fovW) / view.canvasW)
  const lat = clampLat(view.lat + (dyPx * view.fovH) / view.canvasH)
  return { ...view, lat, lon }
}

/** Multiply both FOVs by the factor, clamped to the projection's bounds. */
export function zoomView(view: ViewState, factor: number): ViewState {
  const hi = maxFov(view)
  const fovH = Math.max(MIN_FOV, Math.min(hi, view.fovH * factor))
  const fovW = Math.max(MIN_FOV, Math.min(hi, view.fovW * factor))
  return { ...view, fovH, fovW }
}

export function withFovPreset(view: ViewState, fovDeg: number): ViewState {
  const hi = maxFov(view)
  const fov = Math.max(MIN_FOV, Math.min(hi, fovDeg))
  return { ...view, fovH: fov, fovW: fov }
}

export function withProjection(view: ViewState, d: number): ViewState {
  const next = { ...view, d }
  return zoomView(next, 1) // re-clamp the FOV for the new projection
}

/** Fraction of the canvas the rect center sits away from the view center. */
export function offCenterFraction(rect: CanvasRect, view: ViewState): number {
  const dx = Math.abs(rect.x + rect.w / 2 - view.canvasW / 2) / view.canvasW
  const dy = Math.abs(rect.y + rect.h / 2 - view.canvasH / 2) / view.canvasH
  return Math.max(dx, dy)
}

/** Advisory canonical-pose guard: warn beyond 10% of the canvas. */
export function isOffCenter(rect: CanvasRect, view: ViewState): boolean {
  return offCenterFraction(rect, view) > 0.1
}
